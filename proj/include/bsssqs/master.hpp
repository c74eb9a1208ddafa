#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bsssqs/chain.hpp"
#include "bsssqs/crypto.hpp"
#include "bsssqs/netsim.hpp"
#include "bsssqs/question.hpp"
#include "bsssqs/rng.hpp"

namespace bsssqs {

// One question paper after both encryption phases, plus the digest that
// feeds every later paper's key.
struct EncryptedQsp {
    std::size_t index = 0;
    Ciphertext phase1;
    Ciphertext phase2;
    Hash256 hash{};
};

struct EncryptionBatch {
    std::uint64_t tau_c = 0;
    SaltHash salt;
    std::vector<Hash256> hash_chain;
    std::vector<EncryptedQsp> qsps;
};

struct SmartContract {
    std::string exam_id;
    std::string title;
    std::vector<Hash256> qsp_hashes;
    std::uint64_t tau_c = 0;
    SaltHash salt;
    std::uint64_t unlock_time = 0;

    std::string name() const { return "exam_" + exam_id + "_" + title; }

    bool operator==(const SmartContract&) const = default;
};

inline void to_json(Json& j, const SmartContract& c)
{
    std::vector<std::string> hashes;
    for (const Hash256& h : c.qsp_hashes)
        hashes.push_back(hash_to_hex(h));
    j = Json{{"exam_id", c.exam_id},
             {"title", c.title},
             {"qsp_hashes", hashes},
             {"tau_c", c.tau_c},
             {"salt_hex", hex_encode(c.salt.bytes)},
             {"unlock_time", c.unlock_time}};
}

inline void from_json(const Json& j, SmartContract& c)
{
    j.at("exam_id").get_to(c.exam_id);
    j.at("title").get_to(c.title);
    c.qsp_hashes.clear();
    for (const auto& s : j.at("qsp_hashes"))
        c.qsp_hashes.push_back(hash_from_hex(s.get<std::string>()));
    j.at("tau_c").get_to(c.tau_c);
    Bytes salt = hex_decode(j.at("salt_hex").get<std::string>());
    if (salt.size() != 32)
        throw Error("bad salt length");
    std::copy(salt.begin(), salt.end(), c.salt.bytes.begin());
    j.at("unlock_time").get_to(c.unlock_time);
}

struct EncryptedSmartContract {
    std::string exam_id;
    Ciphertext ciphertext;
};

// Phase 1: each paper sealed under the batch timestamp alone, with the
// timestamp folded into the plaintext as well.
inline std::vector<Ciphertext> phase1_encrypt(const std::vector<QuestionPaper>& qsps,
                                              std::uint64_t tau_c, Rng& rng)
{
    if (qsps.empty())
        throw Error("empty batch");
    if (tau_c == 0)
        throw Error("tau_c must be positive");
    std::vector<Ciphertext> out;
    out.reserve(qsps.size());
    for (const QuestionPaper& q : qsps) {
        Bytes plain = canonical_bytes(q);
        append(plain, be64_bytes(tau_c));
        out.push_back(sym_encrypt({be64_bytes(tau_c)}, plain, rng));
    }
    return out;
}

// Phase 2: paper 0 re-sealed under the timestamp alone; every later paper
// is keyed by the timestamp, all prior phase-2 digests in order, and the
// batch salt, chaining the ciphertexts together.
inline EncryptionBatch phase2_encrypt(const std::vector<Ciphertext>& phase1, std::uint64_t tau_c,
                                      const SaltHash& salt, Rng& rng)
{
    if (phase1.empty())
        throw Error("empty batch");
    EncryptionBatch batch;
    batch.tau_c = tau_c;
    batch.salt = salt;

    Bytes mu; // concatenation of prior digests
    for (std::size_t i = 0; i < phase1.size(); ++i) {
        Bytes plain = phase1[i].serialize();
        append(plain, be64_bytes(tau_c));

        Ciphertext sealed;
        if (i == 0) {
            sealed = sym_encrypt({be64_bytes(tau_c)}, plain, rng);
        } else {
            std::vector<Bytes> parts;
            parts.push_back(be64_bytes(tau_c));
            for (const Hash256& h : batch.hash_chain)
                parts.push_back(as_bytes(h));
            parts.push_back(as_bytes(salt.bytes));
            append(plain, mu);
            append(plain, salt.bytes);
            sealed = sym_encrypt(parts, plain, rng);
        }

        Hash256 digest = sha256(sealed.serialize());
        batch.qsps.push_back({i, phase1[i], sealed, digest});
        batch.hash_chain.push_back(digest);
        append(mu, digest);
    }
    return batch;
}

// Genesis plus one block per phase-2 ciphertext, in batch order.
inline Chain build_blocks(const EncryptionBatch& batch, unsigned difficulty,
                          std::uint64_t creation_time, Rng& rng)
{
    Chain chain = Chain::create(batch.tau_c, difficulty, rng);
    for (const EncryptedQsp& q : batch.qsps)
        chain.append(q.phase2.serialize(), {batch.tau_c, creation_time});
    return chain;
}

inline SmartContract make_contract(const EncryptionBatch& batch, const std::string& exam_id,
                                   const std::string& title, std::uint64_t unlock_time)
{
    return SmartContract{exam_id, title, batch.hash_chain, batch.tau_c, batch.salt, unlock_time};
}

// Seal the contract under derive_key([tau_sm, salt_r]) with the key itself
// embedded in the plaintext; the key is escrowed until selection time.
inline std::pair<EncryptedSmartContract, DerivedKey>
encrypt_contract(const SmartContract& sm, std::uint64_t tau_sm, const SaltHash& salt_r, Rng& rng)
{
    DerivedKey key = derive_key({be64_bytes(tau_sm), as_bytes(salt_r.bytes)});
    Bytes plain = canonical_bytes(sm);
    append(plain, key.bytes);
    EncryptedSmartContract enc;
    enc.exam_id = sm.exam_id;
    enc.ciphertext = sym_encrypt_with_key(key, plain, rng);
    return {std::move(enc), key};
}

struct ExclusionPool {
    std::set<Hash256> excluded_hashes;

    bool contains(const Hash256& h) const { return excluded_hashes.count(h) > 0; }
};

// Order-preserving removal of excluded digests.
inline std::vector<Hash256> filter_qsps(const std::vector<Hash256>& all_hashes,
                                        const ExclusionPool& excluded)
{
    for (const Hash256& h : excluded.excluded_hashes) {
        if (std::find(all_hashes.begin(), all_hashes.end(), h) == all_hashes.end())
            throw Error("excluded hash not present in registry");
    }
    std::vector<Hash256> out;
    for (const Hash256& h : all_hashes)
        if (!excluded.contains(h))
            out.push_back(h);
    return out;
}

// Ten large primes, indexable by a single decimal digit.
class PrimePool {
public:
    static constexpr std::uint64_t kMinPrime = 1'000'000;

    static PrimePool from(const std::array<std::uint64_t, 10>& primes)
    {
        for (std::uint64_t p : primes) {
            if (p <= kMinPrime)
                throw Error("prime too small: " + std::to_string(p));
            if (!is_prime_u64(p))
                throw Error("not prime: " + std::to_string(p));
        }
        PrimePool pool;
        pool.primes_ = primes;
        return pool;
    }

    // Uniform sample of 10 distinct primes from a vetted source.
    static PrimePool sample(const std::vector<std::uint64_t>& source, Rng& rng)
    {
        if (source.size() < 10)
            throw Error("prime source smaller than 10");
        std::vector<std::uint64_t> copy = source;
        std::array<std::uint64_t, 10> chosen{};
        for (std::size_t i = 0; i < 10; ++i) {
            std::size_t j = i + rng.below(copy.size() - i);
            std::swap(copy[i], copy[j]);
            chosen[i] = copy[i];
        }
        return from(chosen);
    }

    std::uint64_t at(unsigned digit) const
    {
        if (digit > 9)
            throw Error("digit out of range");
        return primes_[digit];
    }

    const std::array<std::uint64_t, 10>& primes() const { return primes_; }

private:
    PrimePool() = default;
    std::array<std::uint64_t, 10> primes_{};
};

// Everything needed to re-check a selection after the fact.
struct SelectionResult {
    std::uint64_t tau = 0;
    unsigned d_last = 0;
    unsigned d_second_last = 0;
    std::uint64_t p_last = 0;
    std::uint64_t p_second_last = 0;
    std::size_t q_fn = 0;
    std::size_t selected_index = 0;
    Hash256 selected_hash{};
};

inline void to_json(Json& j, const SelectionResult& r)
{
    j = Json{{"tau", r.tau},
             {"d_last", r.d_last},
             {"d_second_last", r.d_second_last},
             {"p_last", r.p_last},
             {"p_second_last", r.p_second_last},
             {"q_fn", r.q_fn},
             {"selected_index", r.selected_index},
             {"selected_hash_hex", hash_to_hex(r.selected_hash)}};
}

// The selection rule: take the last and second-last decimal digits of tau,
// use them to pick two pool primes, and reduce (p_l - q_fn) * p_sl modulo
// the filtered count. Exact integer arithmetic throughout. Exposed without
// the hash lookup so audits can re-run the formula standalone.
inline SelectionResult compute_selection(const PrimePool& pool, std::uint64_t tau,
                                         std::size_t q_fn)
{
    if (q_fn == 0)
        throw Error("no eligible QSP");
    SelectionResult r;
    r.tau = tau;
    r.d_last = static_cast<unsigned>(tau % 10);
    r.d_second_last = static_cast<unsigned>((tau / 10) % 10);
    r.p_last = pool.at(r.d_last);
    r.p_second_last = pool.at(r.d_second_last);
    r.q_fn = q_fn;
    if (r.q_fn > r.p_last)
        throw Error("filtered count exceeds pool primes");
    unsigned __int128 product =
        static_cast<unsigned __int128>(r.p_last - r.q_fn) * r.p_second_last;
    r.selected_index = static_cast<std::size_t>(product % r.q_fn);
    return r;
}

inline SelectionResult select_qsp(const PrimePool& pool, std::uint64_t tau,
                                  const std::vector<Hash256>& filtered)
{
    SelectionResult r = compute_selection(pool, tau, filtered.size());
    r.selected_hash = filtered[r.selected_index];
    return r;
}

enum class MinionStatus { active, inactive, excluded };

inline const char* to_string(MinionStatus s)
{
    switch (s) {
    case MinionStatus::active: return "active";
    case MinionStatus::inactive: return "inactive";
    case MinionStatus::excluded: return "excluded";
    }
    return "?";
}

struct MinionRecord {
    std::string minion_id;
    MinionStatus status = MinionStatus::active;
};

enum class AuthDenyReason { too_early, not_selected, minion_excluded };

inline const char* to_string(AuthDenyReason r)
{
    switch (r) {
    case AuthDenyReason::too_early: return "too_early";
    case AuthDenyReason::not_selected: return "not_selected";
    case AuthDenyReason::minion_excluded: return "minion_excluded";
    }
    return "?";
}

struct AuthDecision {
    bool allow = false;
    AuthDenyReason reason = AuthDenyReason::not_selected;
    bool unauthorized = false; // flags a forged or rogue request
};

struct DeliveryReport {
    std::vector<std::string> delivered;
    std::vector<std::string> skipped; // inactive or excluded at send time
};

struct MasterConfig {
    std::string exam_id;
    std::string title;
    unsigned difficulty = 8;
    std::uint64_t unlock_time = 0;
    std::uint64_t notify_time = 0;
    std::vector<std::uint64_t> prime_source;
    std::uint64_t seed = 0;
};

// The single blockchain writer: encrypts batches, builds the chain, seals
// the contract, distributes to minions, selects the exam paper, and
// arbitrates access.
class Master {
public:
    Master(Simulator& net, std::string id, MasterConfig cfg)
        : net_(net), id_(std::move(id)), cfg_(std::move(cfg)), rng_(cfg_.seed),
          pool_(PrimePool::sample(cfg_.prime_source, rng_))
    {
        if (cfg_.notify_time > cfg_.unlock_time)
            throw Error("notify_time must not exceed unlock_time");
        net_.register_node(id_, [this](const MessageEnvelope& env) { handle(env); });
    }

    const std::string& id() const { return id_; }
    const PrimePool& prime_pool() const { return pool_; }

    void register_minion(const std::string& minion_id)
    {
        minions_[minion_id] = MinionRecord{minion_id, MinionStatus::active};
    }

    void set_minion_status(const std::string& minion_id, MinionStatus status)
    {
        auto it = minions_.find(minion_id);
        if (it == minions_.end())
            throw Error("unknown minion: " + minion_id);
        it->second.status = status;
    }

    MinionStatus minion_status(const std::string& minion_id) const
    {
        auto it = minions_.find(minion_id);
        if (it == minions_.end())
            throw Error("unknown minion: " + minion_id);
        return it->second.status;
    }

    void handle(const MessageEnvelope& env)
    {
        switch (env.kind) {
        case MsgKind::qsp_batch:
            intake_ = parse_canonical<std::vector<QuestionPaper>>(env.payload);
            audit("batch_received", std::to_string(intake_.size()) + " papers");
            break;
        case MsgKind::auth_request:
            respond_authorization(env);
            break;
        case MsgKind::alert:
            handle_alert(env);
            break;
        default:
            audit("ignored", std::string("kind=") + to_string(env.kind));
            break;
        }
    }

    bool has_intake() const { return !intake_.empty(); }
    const std::vector<QuestionPaper>& intake() const { return intake_; }

    // Run the full encryption pipeline on the intake batch at the current
    // virtual time.
    void encrypt_batch()
    {
        if (intake_.empty())
            throw Error("no intake batch");
        std::uint64_t tau_c = net_.now();
        SaltHash salt = SaltHash::random(rng_);
        std::vector<Ciphertext> phase1 = phase1_encrypt(intake_, tau_c, rng_);
        batch_ = phase2_encrypt(phase1, tau_c, salt, rng_);
        chain_ = build_blocks(*batch_, cfg_.difficulty, net_.now(), rng_);
        contract_ = make_contract(*batch_, cfg_.exam_id, cfg_.title, cfg_.unlock_time);
        std::uint64_t tau_sm = net_.now();
        SaltHash salt_r = SaltHash::random(rng_);
        auto [enc, key] = encrypt_contract(*contract_, tau_sm, salt_r, rng_);
        enc_contract_ = std::move(enc);
        contract_key_ = key;
        audit("batch_encrypted", std::to_string(batch_->qsps.size()) + " papers");
    }

    const EncryptionBatch& batch() const { return require(batch_, "batch"); }
    const Chain& chain() const { return require(chain_, "chain"); }
    const SmartContract& contract() const { return require(contract_, "contract"); }
    const DerivedKey& contract_key() const { return require(contract_key_, "contract key"); }

    DeliveryReport distribute()
    {
        require(chain_, "chain");
        DeliveryReport report;
        for (auto& [mid, record] : minions_) {
            if (record.status != MinionStatus::active) {
                report.skipped.push_back(mid);
                continue;
            }
            send_shipment(mid);
            report.delivered.push_back(mid);
        }
        return report;
    }

    // Retry hook: re-send to minions that have come back.
    void retry_distribution(const std::string& minion_id)
    {
        auto it = minions_.find(minion_id);
        if (it == minions_.end())
            throw Error("unknown minion: " + minion_id);
        if (it->second.status != MinionStatus::active)
            throw Error("minion not active: " + minion_id);
        send_shipment(minion_id);
    }

    void exclude_qsp(const Hash256& hash)
    {
        const std::vector<Hash256>& all = require(batch_, "batch").hash_chain;
        if (std::find(all.begin(), all.end(), hash) == all.end())
            throw Error("unknown QSP hash");
        excluded_.excluded_hashes.insert(hash);
        audit("qsp_excluded", hash_to_hex(hash));
    }

    const ExclusionPool& exclusion_pool() const { return excluded_; }

    std::vector<Hash256> filtered_hashes() const
    {
        return filter_qsps(require(batch_, "batch").hash_chain, excluded_);
    }

    // Pick the exam paper and release the contract key to every active
    // minion. Refused before the configured notification time.
    const SelectionResult& select_and_notify()
    {
        if (net_.now() < cfg_.notify_time)
            throw Error("notification time not reached");
        require(batch_, "batch");
        selection_ = select_qsp(pool_, net_.now(), filtered_hashes());
        notified_ = true;
        Json notice{{"exam_id", cfg_.exam_id},
                    {"selected_hash_hex", hash_to_hex(selection_->selected_hash)},
                    {"contract_key_hex", hex_encode(contract_key().bytes)},
                    {"unlock_time", cfg_.unlock_time}};
        Bytes payload = to_bytes(notice.dump());
        for (auto& [mid, record] : minions_) {
            if (record.status != MinionStatus::active)
                continue;
            net_.send(id_, mid, MsgKind::selection_notice, payload);
        }
        audit("selection_notified", hash_to_hex(selection_->selected_hash));
        return *selection_;
    }

    bool notified() const { return notified_; }
    const SelectionResult& selection() const { return require(selection_, "selection"); }

    AuthDecision authorize(const std::string& minion_id, const std::string& exam_id,
                           std::uint64_t now) const
    {
        auto it = minions_.find(minion_id);
        if (it == minions_.end() || it->second.status != MinionStatus::active)
            return {false, AuthDenyReason::minion_excluded, false};
        if (!notified_ || exam_id != cfg_.exam_id)
            return {false, AuthDenyReason::not_selected, false};
        if (now < cfg_.unlock_time)
            return {false, AuthDenyReason::too_early, false};
        return {true, AuthDenyReason::not_selected, false};
    }

    const std::vector<std::string>& audit_log() const { return audit_; }

private:
    template <typename T>
    static const T& require(const std::optional<T>& opt, const char* what)
    {
        if (!opt)
            throw Error(std::string(what) + " not ready");
        return *opt;
    }

    void send_shipment(const std::string& minion_id)
    {
        net_.send(id_, minion_id, MsgKind::chain_shipment, chain_->serialize());
        Json j{{"exam_id", enc_contract_->exam_id},
               {"ciphertext_hex", hex_encode(enc_contract_->ciphertext.serialize())}};
        net_.send(id_, minion_id, MsgKind::contract_shipment, to_bytes(j.dump()));
    }

    void respond_authorization(const MessageEnvelope& env)
    {
        std::string minion_id;
        std::string exam_id;
        std::optional<Hash256> requested;
        try {
            Json j = Json::parse(to_string(env.payload));
            minion_id = j.at("minion_id").get<std::string>();
            exam_id = j.at("exam_id").get<std::string>();
            if (j.contains("requested_hash_hex"))
                requested = hash_from_hex(j.at("requested_hash_hex").get<std::string>());
        } catch (const std::exception& e) {
            audit("bad_auth_request", e.what());
            return;
        }

        AuthDecision decision = authorize(minion_id, exam_id, net_.now());
        if (decision.allow && requested && notified_ &&
            *requested != selection_->selected_hash) {
            // A request for anything but the selected paper is a rogue
            // chain access, not a timing mistake.
            decision = {false, AuthDenyReason::not_selected, true};
        }
        Json reply{{"allow", decision.allow},
                   {"reason", decision.allow ? "" : to_string(decision.reason)},
                   {"unauthorized", decision.unauthorized},
                   {"exam_id", exam_id}};
        net_.send(id_, env.sender, MsgKind::auth_response, to_bytes(reply.dump()));
    }

    void handle_alert(const MessageEnvelope& env)
    {
        Json j;
        try {
            j = Json::parse(to_string(env.payload));
        } catch (const std::exception&) {
            audit("bad_alert", env.sender);
            return;
        }
        std::string type = j.value("type", "");
        if (type == "tamper_alarm") {
            std::string mid = j.value("minion_id", env.sender);
            auto it = minions_.find(mid);
            if (it != minions_.end()) {
                it->second.status = MinionStatus::excluded;
                audit("minion_excluded", mid);
            }
        } else if (type == "resend_request") {
            std::string mid = j.value("minion_id", env.sender);
            auto it = minions_.find(mid);
            if (it != minions_.end() && it->second.status == MinionStatus::active) {
                send_shipment(mid);
                audit("shipment_resent", mid);
            }
        } else {
            audit("alert", type);
        }
    }

    void audit(const std::string& event, const std::string& detail)
    {
        Json j{{"ts", net_.now()}, {"event", event}, {"detail", detail}};
        audit_.push_back(j.dump());
    }

    Simulator& net_;
    std::string id_;
    MasterConfig cfg_;
    Rng rng_;
    PrimePool pool_;
    std::vector<QuestionPaper> intake_;
    std::optional<EncryptionBatch> batch_;
    std::optional<Chain> chain_;
    std::optional<SmartContract> contract_;
    std::optional<EncryptedSmartContract> enc_contract_;
    std::optional<DerivedKey> contract_key_;
    ExclusionPool excluded_;
    std::map<std::string, MinionRecord> minions_;
    std::optional<SelectionResult> selection_;
    bool notified_ = false;
    std::vector<std::string> audit_;
};

} // namespace bsssqs
