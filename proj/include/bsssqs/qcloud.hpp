#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bsssqs/netsim.hpp"
#include "bsssqs/question.hpp"
#include "bsssqs/rng.hpp"
#include "bsssqs/submission.hpp"

namespace bsssqs {

struct FilterCriteria {
    std::string course_id;
    std::size_t papers_wanted = 1;
    std::size_t questions_per_paper = 1;
    std::uint64_t rng_seed = 0;
    std::map<int, std::size_t> weight_quota; // empty = no quota
};

namespace detail {

inline std::string normalize_whitespace(const std::string& s)
{
    std::string out;
    bool in_space = false;
    for (char c : s) {
        bool ws = (c == ' ' || c == '\t' || c == '\n' || c == '\r');
        if (ws) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty())
            out.push_back(' ');
        in_space = false;
        out.push_back(c);
    }
    return out;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.below(i)]);
}

// First k elements of a seeded partial shuffle: a uniform sample without
// replacement.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng)
{
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i)
        idx[i] = i;
    for (std::size_t i = 0; i < k; ++i)
        std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(k);
    return idx;
}

} // namespace detail

// Deterministic intake formatting: drop duplicate ids (first wins),
// normalize body whitespace, then apply a seeded shuffle.
inline std::vector<Question> format_questions(const std::vector<Question>& raw,
                                              std::uint64_t seed)
{
    std::vector<Question> out;
    std::set<std::string> seen;
    for (const Question& q : raw) {
        if (!seen.insert(q.id).second)
            continue;
        Question cleaned = q;
        cleaned.body = detail::normalize_whitespace(q.body);
        out.push_back(std::move(cleaned));
    }
    Rng rng(seed);
    detail::shuffle(out, rng);
    return out;
}

// Pure function of (pool, criteria): each paper samples
// questions_per_paper questions without replacement (repeats allowed
// across papers), honoring the per-paper weight quota when present.
inline std::vector<QuestionPaper> build_qsps(const std::vector<Question>& pool,
                                             const FilterCriteria& criteria)
{
    if (criteria.papers_wanted < 1)
        throw Error("papers_wanted must be at least 1");
    if (criteria.questions_per_paper < 1)
        throw Error("questions_per_paper must be at least 1");

    std::vector<Question> eligible;
    for (const Question& q : pool)
        if (q.course_id == criteria.course_id)
            eligible.push_back(q);

    if (eligible.size() < criteria.questions_per_paper)
        throw Error("pool has " + std::to_string(eligible.size()) + " eligible questions for course " +
                    criteria.course_id + ", need " + std::to_string(criteria.questions_per_paper));

    std::map<int, std::vector<std::size_t>> by_weight;
    if (!criteria.weight_quota.empty()) {
        std::size_t total = 0;
        for (auto& [w, count] : criteria.weight_quota)
            total += count;
        if (total != criteria.questions_per_paper)
            throw Error("weight quota totals " + std::to_string(total) + ", need " +
                        std::to_string(criteria.questions_per_paper) + " per paper");
        for (std::size_t i = 0; i < eligible.size(); ++i)
            by_weight[eligible[i].weight].push_back(i);
        for (auto& [w, count] : criteria.weight_quota) {
            std::size_t have = by_weight.count(w) ? by_weight[w].size() : 0;
            if (have < count)
                throw Error("need " + std::to_string(count) + " weight-" + std::to_string(w) +
                            " questions, pool has " + std::to_string(have));
        }
    }

    Rng rng(criteria.rng_seed);
    std::vector<QuestionPaper> papers;
    for (std::size_t p = 0; p < criteria.papers_wanted; ++p) {
        std::vector<Question> chosen;
        if (criteria.weight_quota.empty()) {
            for (std::size_t i : detail::sample_indices(eligible.size(),
                                                        criteria.questions_per_paper, rng))
                chosen.push_back(eligible[i]);
        } else {
            for (auto& [w, count] : criteria.weight_quota) {
                const std::vector<std::size_t>& cls = by_weight[w];
                for (std::size_t i : detail::sample_indices(cls.size(), count, rng))
                    chosen.push_back(eligible[cls[i]]);
            }
            detail::shuffle(chosen, rng);
        }
        papers.push_back({p, criteria.course_id, std::move(chosen)});
    }
    return papers;
}

struct Tombstone {
    std::string course_id;
    std::size_t count = 0;
};

struct QuestionCloudConfig {
    std::vector<std::uint64_t> rho_pool; // vetted primes for one-time keys
    std::uint64_t submission_deadline = UINT64_MAX;
    std::uint64_t seed = 0;
};

// The question cloud node: verifies setters over the five-message
// handshake, pools their questions, builds QSP batches, and hands them to
// the master, erasing its own copies afterward.
class QuestionCloud {
public:
    QuestionCloud(Simulator& net, std::string id, QuestionCloudConfig cfg)
        : net_(net), id_(std::move(id)), cfg_(std::move(cfg)), rng_(cfg_.seed)
    {
        if (cfg_.rho_pool.empty())
            throw Error("rho pool must not be empty");
        net_.register_node(id_, [this](const MessageEnvelope& env) { handle(env); });
    }

    const std::string& id() const { return id_; }

    void register_setter(const Credential& cred) { credentials_.add(cred); }

    void handle(const MessageEnvelope& env)
    {
        switch (env.kind) {
        case MsgKind::d1:
        case MsgKind::d3:
        case MsgKind::d5:
            handle_handshake(env);
            break;
        default:
            audit("ignored", std::string("kind=") + to_string(env.kind));
            break;
        }
    }

    bool has_question(const std::string& id) const
    {
        for (const Question& q : pool_)
            if (q.id == id)
                return true;
        return false;
    }

    std::size_t pool_size() const { return pool_.size(); }
    const std::vector<Tombstone>& tombstones() const { return tombstones_; }
    std::size_t accepted_submissions() const { return accepted_; }
    std::size_t rejected_submissions() const { return rejected_; }

    // Format + filter the pool into an exam batch.
    std::vector<QuestionPaper> build_batch(const FilterCriteria& criteria)
    {
        std::vector<Question> formatted = format_questions(pool_, criteria.rng_seed);
        return build_qsps(formatted, criteria);
    }

    // Ship a batch to the master; on scheduled transport the shipped
    // questions are erased here and only a tombstone remains.
    bool handover(const std::vector<QuestionPaper>& qsps, const std::string& master_id)
    {
        if (qsps.empty())
            throw Error("nothing to hand over");
        Json j = qsps;
        SendResult res = net_.send(id_, master_id, MsgKind::qsp_batch, to_bytes(j.dump()));
        if (res.disposition != Disposition::scheduled) {
            audit("handover_failed", to_string(res.disposition));
            return false;
        }
        std::set<std::string> shipped;
        for (const QuestionPaper& p : qsps)
            for (const Question& q : p.questions)
                shipped.insert(q.id);
        std::size_t before = pool_.size();
        pool_.erase(std::remove_if(pool_.begin(), pool_.end(),
                                   [&](const Question& q) { return shipped.count(q.id) > 0; }),
                    pool_.end());
        tombstones_.push_back({qsps.front().course_id, before - pool_.size()});
        audit("handover", std::to_string(qsps.size()) + " papers");
        return true;
    }

    const std::vector<std::string>& audit_log() const { return audit_; }

private:
    void handle_handshake(const MessageEnvelope& env)
    {
        HandshakeMessage msg;
        try {
            msg = HandshakeMessage::from_payload(env.payload);
        } catch (const Error& e) {
            audit("malformed", e.what());
            return;
        }

        if (msg.type == "D1") {
            if (sessions_.count(msg.session_id)) {
                send_failure(env.sender, msg.session_id, "session already exists");
                return;
            }
            std::uint64_t rho = cfg_.rho_pool[rng_.below(cfg_.rho_pool.size())];
            try {
                CloudSession session = CloudSession::open(msg, rho, net_.now(),
                                                          SaltHash::random(rng_));
                HandshakeMessage d2 = session.d2();
                sessions_.emplace(msg.session_id, std::move(session));
                net_.send(id_, env.sender, MsgKind::d2, d2.to_payload());
            } catch (const Error& e) {
                send_failure(env.sender, msg.session_id, e.what());
            }
            return;
        }

        auto it = sessions_.find(msg.session_id);
        if (it == sessions_.end()) {
            send_failure(env.sender, msg.session_id, "unknown session");
            return;
        }
        CloudSession& session = it->second;

        if (msg.type == "D3") {
            HandshakeMessage reply = session.verify_credentials(msg, credentials_, rng_);
            if (reply.type == "failure") {
                audit("credentials_rejected", msg.session_id);
                net_.send(id_, env.sender, MsgKind::alert, reply.body);
            } else {
                net_.send(id_, env.sender, MsgKind::d4, reply.to_payload());
            }
            return;
        }

        if (msg.type == "D5") {
            try {
                QuestionSubmission sub = session.receive_questions(msg, credentials_, net_.now(),
                                                                   cfg_.submission_deadline);
                for (Question& q : sub.questions)
                    pool_.push_back(std::move(q));
                ++accepted_;
                audit("submission_accepted", msg.session_id);
            } catch (const AuthError&) {
                // Forged inner layer: reject the payload but keep the
                // session so the genuine setter can still deliver.
                ++rejected_;
                audit("forged_sender", msg.session_id);
                send_failure(env.sender, msg.session_id, "forged sender");
            } catch (const Error& e) {
                ++rejected_;
                session.mark_failed();
                audit("submission_rejected", e.what());
                send_failure(env.sender, msg.session_id, e.what());
            }
            return;
        }

        send_failure(env.sender, msg.session_id, "unexpected message type");
    }

    void send_failure(const std::string& to, const std::string& session_id,
                      const std::string& reason)
    {
        Json j{{"type", "handshake_failure"}, {"session_id", session_id}, {"reason", reason}};
        net_.send(id_, to, MsgKind::alert, to_bytes(j.dump()));
    }

    void audit(const std::string& event, const std::string& detail)
    {
        Json j{{"ts", net_.now()}, {"event", event}, {"detail", detail}};
        audit_.push_back(j.dump());
    }

    Simulator& net_;
    std::string id_;
    QuestionCloudConfig cfg_;
    Rng rng_;
    CredentialStore credentials_;
    std::map<std::string, CloudSession> sessions_;
    std::vector<Question> pool_;
    std::vector<Tombstone> tombstones_;
    std::vector<std::string> audit_;
    std::size_t accepted_ = 0;
    std::size_t rejected_ = 0;
};

// Question-setter node: drives one submission session against the cloud.
class QuestionSetter {
public:
    QuestionSetter(Simulator& net, std::string id, Credential cred,
                   std::vector<Question> questions, std::uint64_t seed)
        : net_(net), id_(std::move(id)), cred_(std::move(cred)),
          questions_(std::move(questions)), rng_(seed)
    {
        net_.register_node(id_, [this](const MessageEnvelope& env) { handle(env); });
    }

    const std::string& id() const { return id_; }

    void submit(const std::string& qc_id)
    {
        qc_id_ = qc_id;
        session_.emplace(id_ + "/" + std::to_string(rng_.next_u64()), cred_);
        HandshakeMessage d1 = session_->begin(rng_.next_u64() >> 16);
        net_.send(id_, qc_id_, MsgKind::d1, d1.to_payload());
    }

    bool finished() const
    {
        return session_ && session_->phase() == SetterSession::Phase::done;
    }
    bool failed() const
    {
        return session_ && session_->phase() == SetterSession::Phase::failed;
    }

private:
    void handle(const MessageEnvelope& env)
    {
        if (!session_)
            return;
        if (env.kind == MsgKind::alert) {
            session_->mark_failed();
            return;
        }
        try {
            HandshakeMessage msg = HandshakeMessage::from_payload(env.payload);
            if (msg.type == "D2") {
                HandshakeMessage d3 = session_->on_public_key(msg, rng_);
                net_.send(id_, qc_id_, MsgKind::d3, d3.to_payload());
            } else if (msg.type == "D4") {
                QuestionSubmission sub{to_string(cred_.qt), questions_};
                HandshakeMessage d5 = session_->on_success_token(msg, sub, rng_);
                net_.send(id_, qc_id_, MsgKind::d5, d5.to_payload());
            }
        } catch (const Error&) {
            // Session already marked failed by the state machine.
        }
    }

    Simulator& net_;
    std::string id_;
    std::string qc_id_;
    Credential cred_;
    std::vector<Question> questions_;
    Rng rng_;
    std::optional<SetterSession> session_;
};

} // namespace bsssqs
