#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bsssqs/bytes.hpp"
#include "bsssqs/rng.hpp"

namespace bsssqs {

enum class MsgKind {
    d1,
    d2,
    d3,
    d4,
    d5,
    qsp_batch,
    chain_shipment,
    contract_shipment,
    selection_notice,
    auth_request,
    auth_response,
    alert,
};

inline const char* to_string(MsgKind k)
{
    switch (k) {
    case MsgKind::d1: return "D1";
    case MsgKind::d2: return "D2";
    case MsgKind::d3: return "D3";
    case MsgKind::d4: return "D4";
    case MsgKind::d5: return "D5";
    case MsgKind::qsp_batch: return "qsp_batch";
    case MsgKind::chain_shipment: return "chain_shipment";
    case MsgKind::contract_shipment: return "contract_shipment";
    case MsgKind::selection_notice: return "selection_notice";
    case MsgKind::auth_request: return "auth_request";
    case MsgKind::auth_response: return "auth_response";
    case MsgKind::alert: return "alert";
    }
    return "?";
}

struct MessageEnvelope {
    std::uint64_t msg_id = 0;
    std::string sender;
    std::string receiver;
    MsgKind kind = MsgKind::alert;
    Bytes payload;
    std::uint64_t sent_at = 0;
};

// Per-link behavior knobs; everything is deterministic under the
// simulator's seed.
struct LinkPolicy {
    std::uint64_t delay = 0;
    double drop_prob = 0.0;
    double duplicate_prob = 0.0;
    std::function<Bytes(const Bytes&)> tamper_hook;
    std::vector<MessageEnvelope>* eavesdropper = nullptr;
};

enum class Disposition { scheduled, dropped, undeliverable };

inline const char* to_string(Disposition d)
{
    switch (d) {
    case Disposition::scheduled: return "scheduled";
    case Disposition::dropped: return "dropped";
    case Disposition::undeliverable: return "undeliverable";
    }
    return "?";
}

struct TranscriptEntry {
    MessageEnvelope envelope; // as sent, before any tamper transform
    Disposition disposition = Disposition::scheduled;
};

struct SendResult {
    std::uint64_t msg_id = 0;
    Disposition disposition = Disposition::scheduled;
};

// Discrete-event, single-threaded message bus standing in for the
// blockchain cloud. All node clocks read from here; the minimum latency is
// one tick so every delivery advances virtual time.
class Simulator {
public:
    using Handler = std::function<void(const MessageEnvelope&)>;

    explicit Simulator(std::uint64_t seed, std::uint64_t start_time = 1)
        : rng_(seed), now_(start_time)
    {
    }

    std::uint64_t now() const { return now_; }

    void register_node(const std::string& node_id, Handler handler)
    {
        if (nodes_.count(node_id))
            throw Error("duplicate node id: " + node_id);
        nodes_[node_id] = std::move(handler);
    }

    void set_link(const std::string& sender, const std::string& receiver, LinkPolicy policy)
    {
        links_[{sender, receiver}] = std::move(policy);
    }

    SendResult send(const std::string& sender, const std::string& receiver, MsgKind kind,
                    Bytes payload)
    {
        if (!nodes_.count(sender))
            throw Error("sender not registered: " + sender);

        MessageEnvelope env;
        env.msg_id = next_msg_id_++;
        env.sender = sender;
        env.receiver = receiver;
        env.kind = kind;
        env.payload = std::move(payload);
        env.sent_at = now_;

        const LinkPolicy* policy = link_for(sender, receiver);

        // The wire sees the envelope before drops or tampering.
        if (policy && policy->eavesdropper)
            policy->eavesdropper->push_back(env);

        SendResult result{env.msg_id, Disposition::scheduled};
        if (!nodes_.count(receiver)) {
            result.disposition = Disposition::undeliverable;
        } else if (policy && policy->drop_prob > 0.0 && rng_.unit() < policy->drop_prob) {
            result.disposition = Disposition::dropped;
        }

        transcript_.push_back({env, result.disposition});
        if (result.disposition != Disposition::scheduled)
            return result;

        MessageEnvelope delivered = env;
        if (policy && policy->tamper_hook)
            delivered.payload = policy->tamper_hook(delivered.payload);
        std::uint64_t deliver_at = now_ + 1 + (policy ? policy->delay : 0);
        queue_.push_back({deliver_at, next_seq_++, delivered});
        if (policy && policy->duplicate_prob > 0.0 && rng_.unit() < policy->duplicate_prob)
            queue_.push_back({deliver_at, next_seq_++, delivered});
        return result;
    }

    // Advance virtual time until nothing is in flight. Returns the number
    // of ticks advanced; throws if max_ticks is exceeded.
    std::uint64_t run_until_quiescent(std::uint64_t max_ticks = 1'000'000)
    {
        const std::uint64_t start = now_;
        while (!queue_.empty()) {
            std::uint64_t next_t = queue_.front().deliver_at;
            for (const Pending& p : queue_)
                next_t = std::min(next_t, p.deliver_at);
            if (next_t - start > max_ticks) {
                throw Error("simulation did not quiesce within " + std::to_string(max_ticks) +
                            " ticks; " + std::to_string(queue_.size()) + " messages in flight");
            }
            now_ = next_t;
            deliver_due();
        }
        return now_ - start;
    }

    // Deliver everything due up to `t`, then pin the clock at `t`.
    void advance_to(std::uint64_t t)
    {
        for (;;) {
            std::uint64_t next_t = t;
            bool found = false;
            for (const Pending& p : queue_) {
                if (p.deliver_at <= t && (!found || p.deliver_at < next_t)) {
                    next_t = p.deliver_at;
                    found = true;
                }
            }
            if (!found)
                break;
            now_ = next_t;
            deliver_due();
        }
        if (t > now_)
            now_ = t;
    }

    const std::vector<TranscriptEntry>& transcript() const { return transcript_; }

    std::size_t in_flight() const { return queue_.size(); }

    // Line-delimited JSON export, one envelope per line, payload as hex.
    std::string transcript_jsonl() const
    {
        std::string out;
        for (const TranscriptEntry& e : transcript_) {
            nlohmann::json j{{"msg_id", e.envelope.msg_id},
                             {"sender", e.envelope.sender},
                             {"receiver", e.envelope.receiver},
                             {"kind", to_string(e.envelope.kind)},
                             {"sent_at", e.envelope.sent_at},
                             {"payload_hex", hex_encode(e.envelope.payload)},
                             {"disposition", to_string(e.disposition)}};
            out += j.dump();
            out += '\n';
        }
        return out;
    }

private:
    struct Pending {
        std::uint64_t deliver_at;
        std::uint64_t seq;
        MessageEnvelope envelope;
    };

    const LinkPolicy* link_for(const std::string& s, const std::string& r) const
    {
        auto it = links_.find({s, r});
        return it == links_.end() ? nullptr : &it->second;
    }

    void deliver_due()
    {
        // Collect everything due now, in send order, then dispatch.
        // Handlers may send more messages; those land in later ticks.
        std::vector<Pending> due;
        std::vector<Pending> rest;
        for (Pending& p : queue_) {
            if (p.deliver_at <= now_)
                due.push_back(std::move(p));
            else
                rest.push_back(std::move(p));
        }
        queue_ = std::move(rest);
        std::sort(due.begin(), due.end(), [](const Pending& a, const Pending& b) {
            return a.seq < b.seq;
        });
        for (Pending& p : due) {
            auto it = nodes_.find(p.envelope.receiver);
            if (it != nodes_.end())
                it->second(p.envelope);
        }
    }

    Rng rng_;
    std::uint64_t now_;
    std::uint64_t next_msg_id_ = 1;
    std::uint64_t next_seq_ = 1;
    std::map<std::string, Handler> nodes_;
    std::map<std::pair<std::string, std::string>, LinkPolicy> links_;
    std::vector<Pending> queue_;
    std::vector<TranscriptEntry> transcript_;
};

} // namespace bsssqs
