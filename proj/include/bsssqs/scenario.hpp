#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bsssqs/master.hpp"
#include "bsssqs/minion.hpp"
#include "bsssqs/netsim.hpp"
#include "bsssqs/qcloud.hpp"
#include "bsssqs/question.hpp"
#include "bsssqs/submission.hpp"

namespace bsssqs {

// Vetted prime source for the master's selection pool (all > 10^6).
inline const std::vector<std::uint64_t>& vetted_primes()
{
    static const std::vector<std::uint64_t> primes = {
        179426549, 24066347, 179424793, 15486511, 15486517, 15486533,
        15486557,  15486571, 15486589,  17142407, 1000003,  1000033,
        1000037,   1000039,  1000081,   1000099,
    };
    return primes;
}

// Primes for one-time key derivation at the question cloud (all > 2^20).
inline const std::vector<std::uint64_t>& otak_primes()
{
    static const std::vector<std::uint64_t> primes = {2750159, 4256233, 7368787, 9999991};
    return primes;
}

enum class AttackKind { eavesdrop, premature_access, block_tamper, forged_sender, compromise_qsp };

inline const char* to_string(AttackKind k)
{
    switch (k) {
    case AttackKind::eavesdrop: return "eavesdrop";
    case AttackKind::premature_access: return "premature_access";
    case AttackKind::block_tamper: return "block_tamper";
    case AttackKind::forged_sender: return "forged_sender";
    case AttackKind::compromise_qsp: return "compromise_qsp";
    }
    return "?";
}

inline AttackKind attack_kind_from_string(const std::string& s)
{
    if (s == "eavesdrop") return AttackKind::eavesdrop;
    if (s == "premature_access") return AttackKind::premature_access;
    if (s == "block_tamper") return AttackKind::block_tamper;
    if (s == "forged_sender") return AttackKind::forged_sender;
    if (s == "compromise_qsp") return AttackKind::compromise_qsp;
    throw Error("unknown attack kind: " + s);
}

struct AttackSpec {
    AttackKind kind;
    Json params = Json::object();
};

struct ScenarioConfig {
    std::string exam_id;
    std::string title;
    std::size_t n_minions = 1;
    std::size_t n_qsps = 1;
    std::size_t n_setters = 1;
    unsigned difficulty = 8;
    std::uint64_t unlock_time = 0;
    std::uint64_t notify_time = 0;
    std::uint64_t seed = 0;
    std::size_t questions_per_paper = 5;
    std::vector<AttackSpec> attacks;

    void validate() const
    {
        if (exam_id.empty())
            throw Error("exam_id must not be empty");
        if (n_minions < 1 || n_qsps < 1 || n_setters < 1)
            throw Error("counts must be at least 1");
        if (questions_per_paper < 1)
            throw Error("questions_per_paper must be at least 1");
        if (notify_time > unlock_time)
            throw Error("notify_time must not exceed unlock_time");
        if (difficulty > 24)
            throw Error("difficulty above 24 bits is not supported");
    }

    static ScenarioConfig from_json(const Json& j)
    {
        try {
            ScenarioConfig c;
            j.at("exam_id").get_to(c.exam_id);
            c.title = j.value("title", std::string{});
            j.at("n_minions").get_to(c.n_minions);
            j.at("n_qsps").get_to(c.n_qsps);
            j.at("n_setters").get_to(c.n_setters);
            j.at("difficulty").get_to(c.difficulty);
            j.at("unlock_time").get_to(c.unlock_time);
            j.at("notify_time").get_to(c.notify_time);
            j.at("seed").get_to(c.seed);
            c.questions_per_paper = j.value("questions_per_paper", std::size_t{5});
            if (j.contains("attacks")) {
                for (const Json& a : j.at("attacks")) {
                    AttackSpec spec;
                    spec.kind = attack_kind_from_string(a.at("kind").get<std::string>());
                    spec.params = a.value("params", Json::object());
                    c.attacks.push_back(std::move(spec));
                }
            }
            c.validate();
            return c;
        } catch (const Json::exception& e) {
            throw Error(std::string("invalid scenario config: ") + e.what());
        }
    }
};

struct AttackVerdict {
    AttackKind kind;
    bool repelled = false;
    std::string detail;
};

struct ScenarioResult {
    bool ok = false;
    Json report;
    std::string transcript;
};

namespace detail {

// Insider adversary: completes D1-D4 with valid credentials, then signs
// the inner layer of D5 with a signature that is not theirs.
class ForgedSetter {
public:
    ForgedSetter(Simulator& net, std::string id, Credential cred, std::vector<Question> questions,
                 std::uint64_t seed)
        : net_(net), id_(std::move(id)), cred_(std::move(cred)),
          questions_(std::move(questions)), rng_(seed)
    {
        net_.register_node(id_, [this](const MessageEnvelope& env) { handle(env); });
    }

    void submit(const std::string& qc_id)
    {
        qc_id_ = qc_id;
        session_id_ = id_ + "/forged";
        eta_ = rng_.next_u64() >> 16;
        HandshakeMessage d1{"D1", session_id_, eta_, cred_.qt, {}};
        net_.send(id_, qc_id_, MsgKind::d1, d1.to_payload());
    }

    bool rejected() const { return rejected_; }

private:
    void handle(const MessageEnvelope& env)
    {
        if (env.kind == MsgKind::alert) {
            rejected_ = true;
            return;
        }
        HandshakeMessage msg = HandshakeMessage::from_payload(env.payload);
        if (msg.type == "D2") {
            qc_public_ = msg.body;
            Bytes body = asym_encrypt(qc_public_, encode_credentials(cred_), rng_).serialize();
            HandshakeMessage d3{"D3", session_id_, eta_ + 2, std::move(body), {}};
            net_.send(id_, qc_id_, MsgKind::d3, d3.to_payload());
        } else if (msg.type == "D4") {
            QuestionSubmission sub{to_string(cred_.qt), questions_};
            Signature wrong;
            Bytes fake = rng_.bytes(32);
            std::copy(fake.begin(), fake.end(), wrong.bytes.begin());
            Ciphertext inner = sym_encrypt({as_bytes(wrong.bytes)}, canonical_bytes(sub), rng_);
            Bytes outer = asym_encrypt(qc_public_, inner.serialize(), rng_).serialize();
            HandshakeMessage d5{"D5", session_id_, eta_ + 4, std::move(outer), msg.body};
            net_.send(id_, qc_id_, MsgKind::d5, d5.to_payload());
        }
    }

    Simulator& net_;
    std::string id_;
    std::string qc_id_;
    std::string session_id_;
    Credential cred_;
    std::vector<Question> questions_;
    Rng rng_;
    Bytes qc_public_;
    std::uint64_t eta_ = 0;
    bool rejected_ = false;
};

inline std::optional<const AttackSpec*> find_attack(const ScenarioConfig& cfg, AttackKind kind)
{
    for (const AttackSpec& a : cfg.attacks)
        if (a.kind == kind)
            return &a;
    return std::nullopt;
}

} // namespace detail

// Execute a full exam cycle over the simulated network, with any
// configured attacks injected, and render a machine-readable report.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg)
{
    cfg.validate();

    Simulator sim(cfg.seed ^ 0x6e657473696dULL, /*start_time=*/1);
    Rng seeds(cfg.seed);

    const std::string master_id = "master";
    const std::string qc_id = "qcloud";
    const std::string course_id = "course-" + cfg.exam_id;

    MasterConfig mcfg;
    mcfg.exam_id = cfg.exam_id;
    mcfg.title = cfg.title;
    mcfg.difficulty = cfg.difficulty;
    mcfg.unlock_time = cfg.unlock_time;
    mcfg.notify_time = cfg.notify_time;
    mcfg.prime_source = vetted_primes();
    mcfg.seed = seeds.fork_seed();
    Master master(sim, master_id, mcfg);

    QuestionCloudConfig qcfg;
    qcfg.rho_pool = otak_primes();
    qcfg.submission_deadline = cfg.notify_time;
    qcfg.seed = seeds.fork_seed();
    QuestionCloud qcloud(sim, qc_id, qcfg);

    std::vector<std::unique_ptr<Minion>> minions;
    std::vector<Credential> minion_users;
    for (std::size_t i = 0; i < cfg.n_minions; ++i) {
        std::string mid = "minion-" + std::to_string(i);
        MinionConfig mc{master_id, /*token_ttl=*/cfg.unlock_time + 100000, seeds.fork_seed()};
        minions.push_back(std::make_unique<Minion>(sim, mid, mc));
        master.register_minion(mid);
        Credential user{to_bytes("proctor-" + std::to_string(i)), to_bytes("pw-" + std::to_string(i))};
        minions.back()->register_user(user);
        minion_users.push_back(user);
    }

    // Attack wiring that must precede traffic.
    std::vector<MessageEnvelope> captured;
    if (detail::find_attack(cfg, AttackKind::eavesdrop)) {
        for (std::size_t i = 0; i < cfg.n_setters; ++i) {
            std::string sid = "setter-" + std::to_string(i);
            LinkPolicy tap;
            tap.eavesdropper = &captured;
            sim.set_link(sid, qc_id, tap);
            sim.set_link(qc_id, sid, tap);
        }
    }
    if (auto atk = detail::find_attack(cfg, AttackKind::block_tamper)) {
        std::size_t target = (*atk)->params.value("minion_index", std::size_t{0}) % cfg.n_minions;
        auto fired = std::make_shared<bool>(false);
        LinkPolicy tamper;
        tamper.tamper_hook = [fired](const Bytes& payload) {
            if (*fired || payload.size() < 80)
                return payload;
            *fired = true;
            Bytes mutated = payload;
            mutated[10] ^= 0x01; // lands in the genesis prev-hash field
            return mutated;
        };
        sim.set_link(master_id, "minion-" + std::to_string(target), tamper);
    }

    // Phase 1: question submission over the five-message handshake.
    std::vector<std::unique_ptr<QuestionSetter>> setters;
    for (std::size_t i = 0; i < cfg.n_setters; ++i) {
        std::string sid = "setter-" + std::to_string(i);
        Credential cred{to_bytes("qt-" + std::to_string(i)), to_bytes("pw-setter-" + std::to_string(i))};
        qcloud.register_setter(cred);
        std::vector<Question> qs;
        for (std::size_t k = 0; k < cfg.questions_per_paper; ++k) {
            qs.push_back({"q-" + std::to_string(i) + "-" + std::to_string(k), course_id,
                          "Question " + std::to_string(k) + " from setter " + std::to_string(i),
                          static_cast<int>(k % 2) + 1});
        }
        setters.push_back(std::make_unique<QuestionSetter>(sim, sid, cred, qs, seeds.fork_seed()));
        setters.back()->submit(qc_id);
    }
    sim.run_until_quiescent();

    std::optional<detail::ForgedSetter> forger;
    if (detail::find_attack(cfg, AttackKind::forged_sender)) {
        Credential cred{to_bytes("qt-insider"), to_bytes("pw-insider")};
        qcloud.register_setter(cred);
        std::vector<Question> qs{{"q-forged-0", course_id, "Planted question", 1}};
        forger.emplace(sim, "setter-insider", cred, qs, seeds.fork_seed());
        forger->submit(qc_id);
        sim.run_until_quiescent();
    }

    bool submissions_ok = qcloud.accepted_submissions() == cfg.n_setters;
    for (const auto& s : setters)
        submissions_ok = submissions_ok && s->finished();

    // Phase 2: build the batch and hand it to the master.
    FilterCriteria criteria;
    criteria.course_id = course_id;
    criteria.papers_wanted = cfg.n_qsps;
    criteria.questions_per_paper = cfg.questions_per_paper;
    criteria.rng_seed = seeds.fork_seed();
    std::vector<QuestionPaper> batch = qcloud.build_batch(criteria);
    bool handover_ok = qcloud.handover(batch, master_id);
    sim.run_until_quiescent();

    // Phase 3: two-phase encryption, chain build, distribution.
    master.encrypt_batch();
    std::vector<Hash256> shipped_hashes;
    for (const Block& b : master.chain().blocks())
        shipped_hashes.push_back(b.hash);
    DeliveryReport delivery = master.distribute();
    sim.run_until_quiescent();

    bool ingest_ok = true;
    for (const auto& m : minions)
        ingest_ok = ingest_ok && m->chain().has_value() && !m->chain()->validate() &&
                    m->has_contract();

    // Phase 4: exclusion, then selection and notification.
    if (auto atk = detail::find_attack(cfg, AttackKind::compromise_qsp)) {
        std::size_t idx = (*atk)->params.value("qsp_index", std::size_t{0}) % cfg.n_qsps;
        master.exclude_qsp(master.batch().hash_chain[idx]);
    }
    sim.advance_to(cfg.notify_time);
    SelectionResult selection = master.select_and_notify();
    sim.run_until_quiescent();

    // Phase 5: optional premature unauthorized access, then the real
    // requests at the unlock boundary.
    std::optional<std::size_t> attacked_minion;
    if (auto atk = detail::find_attack(cfg, AttackKind::premature_access)) {
        std::size_t target = (*atk)->params.value("minion_index", std::size_t{0}) % cfg.n_minions;
        std::uint64_t delta = (*atk)->params.value("delta", std::uint64_t{2});
        std::size_t block = (*atk)->params.value("block_index", std::size_t{1});
        std::uint64_t when = cfg.unlock_time > delta ? cfg.unlock_time - delta : 0;
        sim.advance_to(when);
        minions[target]->simulate_unauthorized_chain_access(block);
        sim.run_until_quiescent();
        attacked_minion = target;
    }

    sim.advance_to(cfg.unlock_time);
    struct RequestRecord {
        std::string minion_id;
        bool granted = false;
        std::string reason;
        std::string digest;
    };
    std::vector<RequestRecord> requests;
    for (std::size_t i = 0; i < cfg.n_minions; ++i) {
        SessionToken token = minions[i]->login(minion_users[i]);
        RequestStatus status = minions[i]->request_qsp(token, cfg.exam_id);
        if (status == RequestStatus::pending)
            sim.run_until_quiescent();
        RequestRecord rec;
        rec.minion_id = minions[i]->id();
        const auto& outcome = minions[i]->last_outcome();
        if (outcome && outcome->granted && outcome->qsp) {
            rec.granted = true;
            rec.digest = hash_to_hex(digest_of(*outcome->qsp));
        } else if (outcome && outcome->reason) {
            rec.reason = to_string(*outcome->reason);
        } else {
            rec.reason = "no outcome";
        }
        requests.push_back(std::move(rec));
    }

    // Expected plaintext: the master's pre-encryption paper behind the
    // selected hash.
    std::size_t selected_batch_index = 0;
    for (std::size_t i = 0; i < master.batch().hash_chain.size(); ++i)
        if (master.batch().hash_chain[i] == selection.selected_hash)
            selected_batch_index = i;
    std::string expected_digest = hash_to_hex(digest_of(master.intake()[selected_batch_index]));

    // Attack verdicts.
    std::vector<AttackVerdict> verdicts;
    for (const AttackSpec& atk : cfg.attacks) {
        AttackVerdict v{atk.kind, false, ""};
        switch (atk.kind) {
        case AttackKind::eavesdrop: {
            std::size_t tried = 0;
            std::size_t failures = 0;
            Rng adversary(cfg.seed ^ 0xadadadadULL);
            for (const MessageEnvelope& env : captured) {
                if (env.kind != MsgKind::d3 && env.kind != MsgKind::d5)
                    continue;
                HandshakeMessage msg = HandshakeMessage::from_payload(env.payload);
                Ciphertext ct = Ciphertext::deserialize(msg.body);
                for (int k = 0; k < 50; ++k) {
                    ++tried;
                    try {
                        asym_decrypt(adversary.bytes(32), ct);
                    } catch (const AuthError&) {
                        ++failures;
                    }
                }
            }
            v.repelled = tried > 0 && failures == tried;
            v.detail = std::to_string(failures) + "/" + std::to_string(tried) +
                       " random-key decryptions failed";
            break;
        }
        case AttackKind::premature_access: {
            if (!attacked_minion)
                break;
            const Minion& m = *minions[*attacked_minion];
            bool alarmed = m.phase() == MinionPhase::alarmed;
            bool excluded = master.minion_status(m.id()) == MinionStatus::excluded;
            bool denied = false;
            for (const RequestRecord& r : requests)
                if (r.minion_id == m.id())
                    denied = !r.granted && r.reason == "minion_excluded";
            bool rehashed = true;
            if (m.chain()) {
                for (std::size_t i = 0; i < shipped_hashes.size() && i < m.chain()->size(); ++i) {
                    bool same = m.chain()->blocks()[i].hash == shipped_hashes[i];
                    std::size_t touched = detail::find_attack(cfg, AttackKind::premature_access)
                                              .value()
                                              ->params.value("block_index", std::size_t{1});
                    if (i < touched ? !same : same)
                        rehashed = false;
                }
            }
            v.repelled = alarmed && excluded && denied && rehashed;
            v.detail = std::string("alarmed=") + (alarmed ? "yes" : "no") +
                       " excluded=" + (excluded ? "yes" : "no") +
                       " denied=" + (denied ? "yes" : "no") +
                       " rehashed=" + (rehashed ? "yes" : "no");
            break;
        }
        case AttackKind::block_tamper: {
            std::size_t target = atk.params.value("minion_index", std::size_t{0}) % cfg.n_minions;
            const Minion& m = *minions[target];
            bool rejected_once = false;
            for (const std::string& line : m.audit_log())
                if (line.find("shipment_rejected") != std::string::npos)
                    rejected_once = true;
            bool recovered = m.chain().has_value() && !m.chain()->validate();
            v.repelled = rejected_once && recovered;
            v.detail = std::string("rejected=") + (rejected_once ? "yes" : "no") +
                       " recovered=" + (recovered ? "yes" : "no");
            break;
        }
        case AttackKind::forged_sender: {
            bool rejected = forger && forger->rejected() && qcloud.rejected_submissions() > 0;
            bool not_stored = !qcloud.has_question("q-forged-0");
            // The planted question must not surface in any paper.
            bool absent = true;
            for (const QuestionPaper& p : master.intake())
                for (const Question& q : p.questions)
                    if (q.id == "q-forged-0")
                        absent = false;
            v.repelled = rejected && not_stored && absent;
            v.detail = std::string("rejected=") + (rejected ? "yes" : "no") +
                       " stored=" + (not_stored ? "no" : "yes");
            break;
        }
        case AttackKind::compromise_qsp: {
            std::size_t idx = atk.params.value("qsp_index", std::size_t{0}) % cfg.n_qsps;
            const Hash256& excluded_hash = master.batch().hash_chain[idx];
            bool not_selected = selection.selected_hash != excluded_hash;
            // Sweep the selection over many timestamps; the excluded paper
            // must never come back.
            bool sweep_clean = true;
            std::vector<Hash256> filtered = master.filtered_hashes();
            for (std::uint64_t t = 0; t < 200; ++t) {
                SelectionResult r =
                    select_qsp(master.prime_pool(), cfg.notify_time + t, filtered);
                if (r.selected_hash == excluded_hash)
                    sweep_clean = false;
            }
            v.repelled = not_selected && sweep_clean;
            v.detail = std::string("excluded stayed out=") + (sweep_clean ? "yes" : "no");
            break;
        }
        }
        verdicts.push_back(std::move(v));
    }

    // Assemble the verdict and the report.
    bool requests_ok = true;
    for (std::size_t i = 0; i < requests.size(); ++i) {
        if (attacked_minion && i == *attacked_minion) {
            requests_ok = requests_ok && !requests[i].granted;
        } else {
            requests_ok =
                requests_ok && requests[i].granted && requests[i].digest == expected_digest;
        }
    }
    bool attacks_ok = true;
    for (const AttackVerdict& v : verdicts)
        attacks_ok = attacks_ok && v.repelled;

    bool ok = submissions_ok && handover_ok && ingest_ok && requests_ok && attacks_ok &&
              selection.selected_index < selection.q_fn;

    Json report;
    report["exam_id"] = cfg.exam_id;
    report["seed"] = cfg.seed;
    report["ok"] = ok;
    report["phases"]["submission"] = {{"accepted", qcloud.accepted_submissions()},
                                      {"rejected", qcloud.rejected_submissions()},
                                      {"ok", submissions_ok}};
    report["phases"]["handover"] = {{"papers", batch.size()}, {"ok", handover_ok}};
    report["phases"]["encryption"] = {{"tau_c", master.batch().tau_c},
                                      {"papers", master.batch().qsps.size()},
                                      {"difficulty", cfg.difficulty},
                                      {"chain_blocks", master.chain().size()}};
    report["phases"]["distribution"] = {{"delivered", delivery.delivered},
                                        {"skipped", delivery.skipped},
                                        {"ok", ingest_ok}};
    report["phases"]["selection"] = selection;
    report["expected_digest"] = expected_digest;

    Json request_json = Json::array();
    for (const RequestRecord& r : requests) {
        Json jr{{"minion", r.minion_id}, {"granted", r.granted}};
        if (r.granted)
            jr["digest"] = r.digest;
        else
            jr["reason"] = r.reason;
        request_json.push_back(std::move(jr));
    }
    report["phases"]["requests"] = request_json;

    Json minion_json = Json::array();
    for (const auto& m : minions) {
        minion_json.push_back({{"id", m->id()},
                               {"phase", to_string(m->phase())},
                               {"master_status", to_string(master.minion_status(m->id()))}});
    }
    report["minions"] = minion_json;

    Json attack_json = Json::array();
    for (const AttackVerdict& v : verdicts) {
        attack_json.push_back(
            {{"kind", to_string(v.kind)}, {"repelled", v.repelled}, {"detail", v.detail}});
    }
    report["attacks"] = attack_json;

    return {ok, std::move(report), sim.transcript_jsonl()};
}

} // namespace bsssqs
