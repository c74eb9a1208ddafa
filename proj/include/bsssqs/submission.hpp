#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "bsssqs/bytes.hpp"
#include "bsssqs/crypto.hpp"
#include "bsssqs/netsim.hpp"
#include "bsssqs/question.hpp"
#include "bsssqs/rng.hpp"

namespace bsssqs {

struct Credential {
    Bytes qt; // questionnaire token; identifies the setter
    Bytes pw;

    bool operator==(const Credential&) const = default;
};

// Setter identities at the cloud. Only the (qt, pw) digest is stored; it
// doubles as the submitter signature used to open the inner layer of D5.
class CredentialStore {
public:
    void add(const Credential& cred)
    {
        if (cred.qt.empty() || cred.pw.empty())
            throw Error("empty credential");
        if (digests_.count(cred.qt))
            throw Error("duplicate questionnaire token");
        digests_[cred.qt] = make_signature(cred.qt, cred.pw);
    }

    bool verify(const Bytes& qt, const Bytes& pw) const
    {
        if (qt.empty() || pw.empty())
            return false;
        auto it = digests_.find(qt);
        return it != digests_.end() && it->second == make_signature(qt, pw);
    }

    std::optional<Signature> signature_for(const Bytes& qt) const
    {
        auto it = digests_.find(qt);
        if (it == digests_.end())
            return std::nullopt;
        return it->second;
    }

private:
    std::map<Bytes, Signature> digests_;
};

// Handshake wire format carried as netsim payloads:
// {"type": "...", "session_id": "...", "nonce": N, "body_hex": "...",
//  "token_hex": "..."} (token only on D5, echoing the D4 success token).
struct HandshakeMessage {
    std::string type; // "D1".."D5" or "failure"
    std::string session_id;
    std::uint64_t nonce = 0;
    Bytes body;
    Bytes token;

    Bytes to_payload() const
    {
        Json j{{"type", type},
               {"session_id", session_id},
               {"nonce", nonce},
               {"body_hex", hex_encode(body)}};
        if (!token.empty())
            j["token_hex"] = hex_encode(token);
        return to_bytes(j.dump());
    }

    static HandshakeMessage from_payload(ByteView payload)
    {
        try {
            Json j = Json::parse(to_string(payload));
            HandshakeMessage m;
            j.at("type").get_to(m.type);
            j.at("session_id").get_to(m.session_id);
            j.at("nonce").get_to(m.nonce);
            m.body = hex_decode(j.at("body_hex").get<std::string>());
            if (j.contains("token_hex"))
                m.token = hex_decode(j.at("token_hex").get<std::string>());
            return m;
        } catch (const Json::exception& e) {
            throw Error(std::string("malformed handshake message: ") + e.what());
        }
    }

    MsgKind wire_kind() const
    {
        if (type == "D1") return MsgKind::d1;
        if (type == "D2") return MsgKind::d2;
        if (type == "D3") return MsgKind::d3;
        if (type == "D4") return MsgKind::d4;
        if (type == "D5") return MsgKind::d5;
        return MsgKind::alert;
    }
};

// D3 body plaintext: length-prefixed qt then pw under one asymmetric
// encryption.
inline Bytes encode_credentials(const Credential& cred)
{
    Bytes out;
    append_prefixed(out, cred.qt);
    append_prefixed(out, cred.pw);
    return out;
}

inline Credential decode_credentials(ByteView plain)
{
    ByteReader r(plain);
    Credential c;
    c.qt = r.read_prefixed();
    c.pw = r.read_prefixed();
    if (!r.done())
        throw Error("trailing bytes in credential payload");
    return c;
}

// Question-setter side of the five-message handshake. The nonce walks
// eta, eta+1, ... eta+4 across D1..D5; anything out of order fails the
// session permanently.
class SetterSession {
public:
    enum class Phase { fresh, awaiting_key, awaiting_token, done, failed };

    SetterSession(std::string session_id, Credential cred)
        : session_id_(std::move(session_id)), cred_(std::move(cred))
    {
        if (cred_.qt.empty() || cred_.pw.empty())
            throw Error("empty credential");
    }

    Phase phase() const { return phase_; }
    const std::string& session_id() const { return session_id_; }

    HandshakeMessage begin(std::uint64_t eta)
    {
        expect(Phase::fresh);
        eta_ = eta;
        phase_ = Phase::awaiting_key;
        return {"D1", session_id_, eta_, cred_.qt, {}};
    }

    // D2 in, D3 out: encrypt credentials to the cloud's one-time key.
    HandshakeMessage on_public_key(const HandshakeMessage& d2, Rng& rng)
    {
        expect(Phase::awaiting_key);
        if (d2.type != "D2" || d2.nonce != eta_ + 1)
            return fail("unexpected message in awaiting_key");
        qc_public_ = d2.body;
        phase_ = Phase::awaiting_token;
        Bytes body = asym_encrypt(qc_public_, encode_credentials(cred_), rng).serialize();
        return {"D3", session_id_, eta_ + 2, std::move(body), {}};
    }

    // D4 in, D5 out: sign-then-encrypt the submission, echo the success
    // token so the cloud can bind D5 to this authenticated session.
    HandshakeMessage on_success_token(const HandshakeMessage& d4, const QuestionSubmission& sub,
                                      Rng& rng)
    {
        expect(Phase::awaiting_token);
        if (d4.type != "D4" || d4.nonce != eta_ + 3)
            return fail("unexpected message in awaiting_token");
        success_token_ = d4.body;
        Signature sig = make_signature(cred_.qt, cred_.pw);
        Ciphertext inner = sym_encrypt({as_bytes(sig.bytes)}, canonical_bytes(sub), rng);
        Bytes outer = asym_encrypt(qc_public_, inner.serialize(), rng).serialize();
        phase_ = Phase::done;
        return {"D5", session_id_, eta_ + 4, std::move(outer), success_token_};
    }

    void mark_failed() { phase_ = Phase::failed; }

private:
    void expect(Phase p)
    {
        if (phase_ != p) {
            phase_ = Phase::failed;
            throw Error("handshake out of order");
        }
    }

    HandshakeMessage fail(const std::string& reason)
    {
        phase_ = Phase::failed;
        throw Error(reason);
    }

    std::string session_id_;
    Credential cred_;
    std::uint64_t eta_ = 0;
    Bytes qc_public_;
    Bytes success_token_;
    Phase phase_ = Phase::fresh;
};

// Cloud side of one handshake session. Owns the one-time keypair; the
// secret is destroyed the moment questions are accepted.
class CloudSession {
public:
    enum class Phase { awaiting_credentials, awaiting_questions, done, failed };

    static CloudSession open(const HandshakeMessage& d1, std::uint64_t rho, std::uint64_t tau_c,
                             const SaltHash& salt)
    {
        if (d1.type != "D1")
            throw Error("expected D1");
        if (d1.body.empty())
            throw Error("D1 missing questionnaire token");
        CloudSession s;
        s.session_id_ = d1.session_id;
        s.eta_ = d1.nonce;
        s.qt_ = d1.body;
        s.otak_ = generate_otak(d1.nonce, rho, tau_c, d1.body, salt);
        return s;
    }

    Phase phase() const { return phase_; }
    const std::string& session_id() const { return session_id_; }
    const Bytes& qt() const { return qt_; }
    const OtakKeyPair& otak() const { return otak_; }
    bool otak_destroyed() const { return otak_.secret.empty(); }

    HandshakeMessage d2() const
    {
        return {"D2", session_id_, eta_ + 1, otak_.public_key, {}};
    }

    // Returns D4 on success or a "failure" message; either way the session
    // phase reflects the outcome.
    HandshakeMessage verify_credentials(const HandshakeMessage& d3, const CredentialStore& store,
                                        Rng& rng)
    {
        if (phase_ != Phase::awaiting_credentials || d3.type != "D3" || d3.nonce != eta_ + 2)
            return failure("protocol violation");
        Bytes plain;
        try {
            plain = asym_decrypt(otak_.secret, Ciphertext::deserialize(d3.body));
        } catch (const Error&) {
            return failure("credential decryption failed");
        }
        Credential cred;
        try {
            cred = decode_credentials(plain);
        } catch (const Error&) {
            return failure("malformed credentials");
        }
        if (cred.qt != qt_ || !store.verify(cred.qt, cred.pw))
            return failure("invalid credentials");
        success_token_ = rng.bytes(16);
        phase_ = Phase::awaiting_questions;
        return {"D4", session_id_, eta_ + 3, success_token_, {}};
    }

    // Final step: peel the one-time key layer, recompute the submitter
    // signature from the verified identity, open the inner layer, then
    // destroy the one-time secret.
    QuestionSubmission receive_questions(const HandshakeMessage& d5, const CredentialStore& store,
                                         std::uint64_t now, std::uint64_t deadline)
    {
        if (otak_destroyed() || phase_ != Phase::awaiting_questions)
            throw Error("session not accepting questions");
        if (d5.type != "D5" || d5.nonce != eta_ + 4)
            throw Error("protocol violation");
        if (d5.token != success_token_)
            throw Error("success token mismatch");
        if (now > deadline)
            throw Error("deadline passed");

        Bytes inner_bytes = asym_decrypt(otak_.secret, Ciphertext::deserialize(d5.body));
        Ciphertext inner = Ciphertext::deserialize(inner_bytes);

        std::optional<Signature> sig = store.signature_for(qt_);
        if (!sig)
            throw Error("unknown questionnaire token");
        Bytes plain;
        try {
            plain = sym_decrypt({as_bytes(sig->bytes)}, inner);
        } catch (const AuthError&) {
            throw AuthError("forged sender");
        }
        QuestionSubmission sub = parse_canonical<QuestionSubmission>(plain);
        if (sub.questions.empty())
            throw Error("empty submission");
        for (const Question& q : sub.questions) {
            if (q.course_id != sub.questions.front().course_id)
                throw Error("mixed courses in one submission");
            if (q.body.empty())
                throw Error("empty question body");
        }

        // One-time key: gone for good. Replays of D3/D5 are undecryptable.
        otak_.secret.clear();
        phase_ = Phase::done;
        return sub;
    }

    void mark_failed()
    {
        phase_ = Phase::failed;
        otak_.secret.clear();
    }

private:
    CloudSession() = default;

    HandshakeMessage failure(const std::string& reason)
    {
        mark_failed();
        Json j{{"type", "handshake_failure"},
               {"session_id", session_id_},
               {"reason", reason}};
        return {"failure", session_id_, eta_, to_bytes(j.dump()), {}};
    }

    std::string session_id_;
    std::uint64_t eta_ = 0;
    Bytes qt_;
    OtakKeyPair otak_;
    Bytes success_token_;
    Phase phase_ = Phase::awaiting_credentials;
};

} // namespace bsssqs
