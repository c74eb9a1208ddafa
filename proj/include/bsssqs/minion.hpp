#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bsssqs/chain.hpp"
#include "bsssqs/crypto.hpp"
#include "bsssqs/master.hpp"
#include "bsssqs/netsim.hpp"
#include "bsssqs/question.hpp"
#include "bsssqs/submission.hpp"

namespace bsssqs {

// Open the sealed contract with the key released at selection time; the
// embedded key copy must match the supplied one.
inline SmartContract decrypt_contract(const EncryptedSmartContract& enc, const DerivedKey& key)
{
    Bytes plain = sym_decrypt_with_key(key, enc.ciphertext);
    if (plain.size() < 32)
        throw Error("contract payload too short");
    Bytes embedded(plain.end() - 32, plain.end());
    if (!std::equal(embedded.begin(), embedded.end(), key.bytes.begin()))
        throw Error("embedded contract key mismatch");
    plain.resize(plain.size() - 32);
    return parse_canonical<SmartContract>(plain);
}

// Walk the two-phase encryption backwards for the selected paper. The
// stored ciphertext digest is checked against the contract before any
// decryption happens.
inline QuestionPaper decrypt_qsp(const SmartContract& contract, const Hash256& selected_hash,
                                 const Chain& chain)
{
    std::size_t index = contract.qsp_hashes.size();
    for (std::size_t i = 0; i < contract.qsp_hashes.size(); ++i) {
        if (contract.qsp_hashes[i] == selected_hash) {
            index = i;
            break;
        }
    }
    if (index == contract.qsp_hashes.size())
        throw Error("unknown QSP");
    if (index + 1 >= chain.size())
        throw Error("chain too short for selected QSP");

    const Bytes& payload = chain.blocks()[index + 1].payload;
    if (sha256(payload) != selected_hash)
        throw Error("tampered payload");

    Ciphertext outer = Ciphertext::deserialize(payload);

    std::vector<Bytes> parts;
    Bytes trailer = be64_bytes(contract.tau_c);
    parts.push_back(be64_bytes(contract.tau_c));
    if (index > 0) {
        for (std::size_t i = 0; i < index; ++i) {
            parts.push_back(as_bytes(contract.qsp_hashes[i]));
            append(trailer, contract.qsp_hashes[i]);
        }
        parts.push_back(as_bytes(contract.salt.bytes));
        append(trailer, contract.salt.bytes);
    }

    Bytes plain = sym_decrypt(parts, outer);
    ByteReader r(plain);
    Ciphertext inner = Ciphertext::read_from(r);
    Bytes rest = r.read(r.remaining());
    if (rest != trailer)
        throw Error("phase-2 trailer mismatch");

    Bytes inner_plain = sym_decrypt({be64_bytes(contract.tau_c)}, inner);
    if (inner_plain.size() < 8)
        throw Error("phase-1 payload too short");
    Bytes stamp(inner_plain.end() - 8, inner_plain.end());
    if (stamp != be64_bytes(contract.tau_c))
        throw Error("embedded timestamp mismatch");
    inner_plain.resize(inner_plain.size() - 8);
    return parse_canonical<QuestionPaper>(inner_plain);
}

struct SessionToken {
    std::string user_id;
    Bytes token;
    std::uint64_t expires_at = 0;
};

enum class MinionPhase { waiting, notified, unlocked, alarmed, purged };

inline const char* to_string(MinionPhase p)
{
    switch (p) {
    case MinionPhase::waiting: return "waiting";
    case MinionPhase::notified: return "notified";
    case MinionPhase::unlocked: return "unlocked";
    case MinionPhase::alarmed: return "alarmed";
    case MinionPhase::purged: return "purged";
    }
    return "?";
}

enum class DenyReason {
    invalid_token,
    too_early,
    not_selected,
    minion_excluded,
    chain_broken,
    tampered,
    purged,
};

inline const char* to_string(DenyReason r)
{
    switch (r) {
    case DenyReason::invalid_token: return "invalid_token";
    case DenyReason::too_early: return "too_early";
    case DenyReason::not_selected: return "not_selected";
    case DenyReason::minion_excluded: return "minion_excluded";
    case DenyReason::chain_broken: return "chain_broken";
    case DenyReason::tampered: return "tampered";
    case DenyReason::purged: return "purged";
    }
    return "?";
}

struct RequestOutcome {
    bool granted = false;
    std::optional<DenyReason> reason;
    std::optional<QuestionPaper> qsp;
};

enum class RequestStatus { denied, pending, granted };

struct MinionConfig {
    std::string master_id;
    std::uint64_t token_ttl = 1000;
    std::uint64_t seed = 0;
};

// Exam-center node: stores the chain and sealed contract, gates access on
// the advertised unlock time before anything touches the chain, and trips
// the tamper alarm on unauthorized chain access.
class Minion {
public:
    Minion(Simulator& net, std::string id, MinionConfig cfg)
        : net_(net), id_(std::move(id)), cfg_(std::move(cfg)), rng_(cfg_.seed)
    {
        net_.register_node(id_, [this](const MessageEnvelope& env) { handle(env); });
    }

    const std::string& id() const { return id_; }
    MinionPhase phase() const { return phase_; }
    const std::optional<Chain>& chain() const { return chain_; }
    bool has_contract() const { return enc_contract_.has_value(); }

    void register_user(const Credential& cred) { users_.add(cred); }

    void handle(const MessageEnvelope& env)
    {
        switch (env.kind) {
        case MsgKind::chain_shipment:
            ingest_chain(env);
            break;
        case MsgKind::contract_shipment:
            ingest_contract(env);
            break;
        case MsgKind::selection_notice:
            on_selection_notice(env);
            break;
        case MsgKind::auth_response:
            on_auth_response(env);
            break;
        default:
            audit("ignored", std::string("kind=") + to_string(env.kind));
            break;
        }
    }

    SessionToken login(const Credential& cred)
    {
        if (!users_.verify(cred.qt, cred.pw))
            throw AuthError("unknown user or wrong password");
        SessionToken token{to_string(cred.qt), rng_.bytes(16), net_.now() + cfg_.token_ttl};
        tokens_[token.user_id] = token; // one active token per user
        audit("login", token.user_id);
        return token;
    }

    // Local gates run synchronously and never emit chain-bound traffic on
    // failure; passing them sends one authorization request to the master
    // and leaves the request pending until the response arrives.
    RequestStatus request_qsp(const SessionToken& token, const std::string& exam_id)
    {
        last_outcome_.reset();
        if (!token_valid(token))
            return deny(DenyReason::invalid_token);
        if (phase_ == MinionPhase::purged)
            return deny(DenyReason::purged);
        if (phase_ == MinionPhase::alarmed)
            return deny(DenyReason::minion_excluded);
        if (phase_ == MinionPhase::waiting || !notice_)
            return deny(DenyReason::too_early);
        if (net_.now() < notice_->unlock_time)
            return deny(DenyReason::too_early);
        if (phase_ == MinionPhase::unlocked && cached_qsp_) {
            last_outcome_ = RequestOutcome{true, std::nullopt, cached_qsp_};
            return RequestStatus::granted;
        }

        Json j{{"minion_id", id_},
               {"exam_id", exam_id},
               {"requested_hash_hex", hash_to_hex(notice_->selected_hash)}};
        net_.send(id_, cfg_.master_id, MsgKind::auth_request, to_bytes(j.dump()));
        pending_exam_ = exam_id;
        audit("auth_requested", exam_id);
        return RequestStatus::pending;
    }

    const std::optional<RequestOutcome>& last_outcome() const { return last_outcome_; }

    // Unauthorized chain-level access: stamp and scramble the targeted
    // block, re-mine, alert the master, and stop serving.
    void handle_unauthorized(std::size_t block_index)
    {
        if (!chain_ || block_index >= chain_->size())
            block_index = chain_ && chain_->size() > 1 ? 1 : 0;
        if (chain_) {
            chain_->touch_unauthorized(block_index, net_.now(), rng_);
            audit("chain_touched", "block " + std::to_string(block_index));
            chain_->remine();
            audit("chain_remined", "from block " + std::to_string(block_index));
        }
        phase_ = MinionPhase::alarmed;
        Json j{{"type", "tamper_alarm"},
               {"minion_id", id_},
               {"detail", "unauthorized chain access at block " + std::to_string(block_index)}};
        net_.send(id_, cfg_.master_id, MsgKind::alert, to_bytes(j.dump()));
    }

    // Attack entry point used by scenarios: a raw read against the chain
    // that bypassed the contract manager entirely.
    void simulate_unauthorized_chain_access(std::size_t block_index)
    {
        audit("unauthorized_access", "block " + std::to_string(block_index));
        handle_unauthorized(block_index);
    }

    void mark_exam_finished() { exam_finished_ = true; }

    void purge()
    {
        if (!exam_finished_)
            throw Error("exam not finished");
        Json stub{{"exam_id", notice_ ? notice_->exam_id : ""},
                  {"finished_at", net_.now()}};
        std::vector<std::string> hashes;
        if (chain_) {
            for (std::size_t i = 1; i < chain_->size(); ++i)
                hashes.push_back(hex_encode(sha256(chain_->blocks()[i].payload)));
            for (std::size_t i = 0; i < chain_->size(); ++i)
                chain_->mutable_block(i).payload.clear();
        }
        stub["qsp_hashes"] = hashes;
        audit_stub_ = stub.dump();
        cached_qsp_.reset();
        enc_contract_.reset();
        contract_.reset();
        notice_.reset();
        phase_ = MinionPhase::purged;
        audit("purged", std::to_string(hashes.size()) + " payloads erased");
    }

    const std::optional<std::string>& audit_stub() const { return audit_stub_; }

    std::size_t storage_bytes() const
    {
        std::size_t n = 0;
        if (chain_)
            for (const Block& b : chain_->blocks())
                n += b.payload.size();
        if (enc_contract_)
            n += enc_contract_->ciphertext.serialize().size();
        if (cached_qsp_)
            n += canonical_bytes(*cached_qsp_).size();
        return n;
    }

    const std::vector<std::string>& audit_log() const { return audit_; }

    struct SelectionNotice {
        std::string exam_id;
        Hash256 selected_hash{};
        DerivedKey contract_key;
        std::uint64_t unlock_time = 0;
    };

    const std::optional<SelectionNotice>& notice() const { return notice_; }

private:
    bool token_valid(const SessionToken& token) const
    {
        auto it = tokens_.find(token.user_id);
        return it != tokens_.end() && it->second.token == token.token &&
               net_.now() < it->second.expires_at;
    }

    RequestStatus deny(DenyReason reason)
    {
        last_outcome_ = RequestOutcome{false, reason, std::nullopt};
        audit("request_denied", to_string(reason));
        return RequestStatus::denied;
    }

    void ingest_chain(const MessageEnvelope& env)
    {
        Chain incoming;
        try {
            incoming = Chain::deserialize(env.payload);
        } catch (const Error& e) {
            audit("shipment_rejected", e.what());
            request_resend();
            return;
        }
        if (auto broken = incoming.validate()) {
            audit("shipment_rejected", "chain broken at block " + std::to_string(*broken));
            request_resend();
            return;
        }
        chain_ = std::move(incoming); // duplicate shipments replace
        audit("chain_ingested", std::to_string(chain_->size()) + " blocks");
    }

    void ingest_contract(const MessageEnvelope& env)
    {
        try {
            Json j = Json::parse(to_string(env.payload));
            EncryptedSmartContract enc;
            enc.exam_id = j.at("exam_id").get<std::string>();
            enc.ciphertext =
                Ciphertext::deserialize(hex_decode(j.at("ciphertext_hex").get<std::string>()));
            enc_contract_ = std::move(enc);
            audit("contract_ingested", enc_contract_->exam_id);
        } catch (const std::exception& e) {
            audit("contract_rejected", e.what());
            request_resend();
        }
    }

    void on_selection_notice(const MessageEnvelope& env)
    {
        Json j;
        try {
            j = Json::parse(to_string(env.payload));
        } catch (const std::exception& e) {
            audit("bad_notice", e.what());
            return;
        }
        std::string exam_id = j.value("exam_id", "");
        if (enc_contract_ && exam_id != enc_contract_->exam_id) {
            audit("notice_ignored", "unknown exam " + exam_id);
            return;
        }
        SelectionNotice n;
        n.exam_id = exam_id;
        n.selected_hash = hash_from_hex(j.at("selected_hash_hex").get<std::string>());
        Bytes key = hex_decode(j.at("contract_key_hex").get<std::string>());
        if (key.size() != 32) {
            audit("bad_notice", "key length");
            return;
        }
        std::copy(key.begin(), key.end(), n.contract_key.bytes.begin());
        n.unlock_time = j.at("unlock_time").get<std::uint64_t>();
        notice_ = n; // repeated notices are idempotent
        if (phase_ == MinionPhase::waiting)
            phase_ = MinionPhase::notified;
        audit("selection_notified", exam_id);
    }

    void on_auth_response(const MessageEnvelope& env)
    {
        Json j;
        try {
            j = Json::parse(to_string(env.payload));
        } catch (const std::exception& e) {
            audit("bad_auth_response", e.what());
            return;
        }
        bool allow = j.value("allow", false);
        bool unauthorized = j.value("unauthorized", false);
        std::string reason = j.value("reason", "");

        if (!allow) {
            if (unauthorized)
                handle_unauthorized(selected_block_index());
            DenyReason r = DenyReason::not_selected;
            if (reason == "too_early")
                r = DenyReason::too_early;
            else if (reason == "minion_excluded")
                r = DenyReason::minion_excluded;
            last_outcome_ = RequestOutcome{false, r, std::nullopt};
            audit("request_denied", reason);
            return;
        }

        // Chain gate, then the two decryptions. A broken chain on an
        // authorized request is denied; the alarm fires only for requests
        // the master flagged as unauthorized.
        if (!chain_ || !enc_contract_ || chain_->validate()) {
            last_outcome_ = RequestOutcome{false, DenyReason::chain_broken, std::nullopt};
            audit("request_denied", "chain_broken");
            return;
        }
        try {
            contract_ = decrypt_contract(*enc_contract_, notice_->contract_key);
            QuestionPaper qsp = decrypt_qsp(*contract_, notice_->selected_hash, *chain_);
            cached_qsp_ = std::move(qsp);
            phase_ = MinionPhase::unlocked;
            last_outcome_ = RequestOutcome{true, std::nullopt, cached_qsp_};
            audit("qsp_unlocked", pending_exam_);
        } catch (const Error& e) {
            last_outcome_ = RequestOutcome{false, DenyReason::tampered, std::nullopt};
            audit("decrypt_failed", e.what());
        }
    }

    std::size_t selected_block_index() const
    {
        if (chain_ && notice_) {
            for (std::size_t i = 1; i < chain_->size(); ++i)
                if (sha256(chain_->blocks()[i].payload) == notice_->selected_hash)
                    return i;
        }
        return 1;
    }

    void request_resend()
    {
        Json j{{"type", "resend_request"}, {"minion_id", id_}};
        net_.send(id_, cfg_.master_id, MsgKind::alert, to_bytes(j.dump()));
    }

    void audit(const std::string& event, const std::string& detail)
    {
        Json j{{"ts", net_.now()}, {"event", event}, {"detail", detail}};
        audit_.push_back(j.dump());
    }

    Simulator& net_;
    std::string id_;
    MinionConfig cfg_;
    Rng rng_;
    CredentialStore users_;
    std::map<std::string, SessionToken> tokens_;
    std::optional<Chain> chain_;
    std::optional<EncryptedSmartContract> enc_contract_;
    std::optional<SmartContract> contract_;
    std::optional<SelectionNotice> notice_;
    std::optional<QuestionPaper> cached_qsp_;
    std::optional<RequestOutcome> last_outcome_;
    std::string pending_exam_;
    bool exam_finished_ = false;
    MinionPhase phase_ = MinionPhase::waiting;
    std::optional<std::string> audit_stub_;
    std::vector<std::string> audit_;
};

} // namespace bsssqs
