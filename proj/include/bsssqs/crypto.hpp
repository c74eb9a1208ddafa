#pragma once

#include <openssl/bn.h>
#include <openssl/core_names.h>
#include <openssl/ec.h>
#include <openssl/evp.h>
#include <openssl/param_build.h>

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "bsssqs/bytes.hpp"
#include "bsssqs/rng.hpp"

namespace bsssqs {

using Hash256 = std::array<std::uint8_t, 32>;

inline Bytes as_bytes(const Hash256& h)
{
    return Bytes(h.begin(), h.end());
}

inline std::string hash_to_hex(const Hash256& h)
{
    return hex_encode(h);
}

inline Hash256 hash_from_hex(std::string_view s)
{
    Bytes b = hex_decode(s);
    if (b.size() != 32)
        throw Error("expected 32-byte hex digest");
    Hash256 h;
    std::copy(b.begin(), b.end(), h.begin());
    return h;
}

// 32-byte key produced by the one-way derivation over ordered parts.
struct DerivedKey {
    Hash256 bytes{};
    bool operator==(const DerivedKey&) const = default;
};

// Random 32-byte salt; only ever minted from a seedable source.
struct SaltHash {
    Hash256 bytes{};
    bool operator==(const SaltHash&) const = default;

    static SaltHash random(Rng& rng)
    {
        SaltHash s;
        Bytes b = rng.bytes(32);
        std::copy(b.begin(), b.end(), s.bytes.begin());
        return s;
    }
};

// Submitter identity digest derived from (token, password).
struct Signature {
    Hash256 bytes{};
    bool operator==(const Signature&) const = default;
};

// Authenticated ciphertext. Decryption under the wrong key fails loudly;
// it never yields unauthenticated bytes.
struct Ciphertext {
    Bytes nonce_iv;
    Bytes body;
    Bytes tag;

    bool operator==(const Ciphertext&) const = default;

    // Wire layout: nonce_iv, tag, body, each with a 4-byte big-endian
    // length prefix.
    Bytes serialize() const
    {
        Bytes out;
        out.reserve(12 + nonce_iv.size() + tag.size() + body.size());
        append_prefixed(out, nonce_iv);
        append_prefixed(out, tag);
        append_prefixed(out, body);
        return out;
    }

    static Ciphertext deserialize(ByteView data)
    {
        ByteReader r(data);
        Ciphertext ct = read_from(r);
        if (!r.done())
            throw Error("trailing bytes after ciphertext");
        return ct;
    }

    static Ciphertext read_from(ByteReader& r)
    {
        Ciphertext ct;
        ct.nonce_iv = r.read_prefixed();
        ct.tag = r.read_prefixed();
        ct.body = r.read_prefixed();
        return ct;
    }
};

inline Hash256 sha256(ByteView data)
{
    Hash256 out;
    unsigned int len = 0;
    if (EVP_Digest(data.empty() ? reinterpret_cast<const std::uint8_t*>("") : data.data(),
                   data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != 32)
        throw Error("sha256 failed");
    return out;
}

// One-way key derivation: SHA-256 over the length-prefixed concatenation
// of the parts, so distinct part lists can never collide by rearranged
// boundaries.
inline DerivedKey derive_key(const std::vector<Bytes>& parts)
{
    if (parts.empty())
        throw Error("no key material");
    Bytes buf;
    for (const Bytes& p : parts) {
        append_u32_be(buf, static_cast<std::uint32_t>(p.size()));
        append(buf, p);
    }
    return DerivedKey{sha256(buf)};
}

inline Signature make_signature(const Bytes& qt, const Bytes& pw)
{
    if (qt.empty() || pw.empty())
        throw Error("empty credential");
    return Signature{derive_key({qt, pw}).bytes};
}

// Deterministic Miller-Rabin for 64-bit integers (fixed witness set covers
// the full range).
inline bool is_prime_u64(std::uint64_t n)
{
    if (n < 2)
        return false;
    for (std::uint64_t p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
        if (n == p)
            return true;
        if (n % p == 0)
            return false;
    }
    std::uint64_t d = n - 1;
    int r = 0;
    while ((d & 1) == 0) {
        d >>= 1;
        ++r;
    }
    auto mulmod = [](std::uint64_t a, std::uint64_t b, std::uint64_t m) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) * b) % m);
    };
    auto powmod = [&](std::uint64_t base, std::uint64_t exp, std::uint64_t m) {
        std::uint64_t acc = 1;
        base %= m;
        while (exp > 0) {
            if (exp & 1)
                acc = mulmod(acc, base, m);
            base = mulmod(base, base, m);
            exp >>= 1;
        }
        return acc;
    };
    for (std::uint64_t a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
        std::uint64_t x = powmod(a, d, n);
        if (x == 1 || x == n - 1)
            continue;
        bool witness = true;
        for (int i = 1; i < r; ++i) {
            x = mulmod(x, x, n);
            if (x == n - 1) {
                witness = false;
                break;
            }
        }
        if (witness)
            return false;
    }
    return true;
}

namespace detail {

struct EvpCipherCtxDeleter {
    void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};
struct EvpMdCtxDeleter {
    void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
struct EvpPkeyDeleter {
    void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct EvpPkeyCtxDeleter {
    void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
struct BnDeleter {
    void operator()(BIGNUM* p) const { BN_free(p); }
};
struct BnCtxDeleter {
    void operator()(BN_CTX* p) const { BN_CTX_free(p); }
};
struct PointDeleter {
    void operator()(EC_POINT* p) const { EC_POINT_free(p); }
};
struct ParamBldDeleter {
    void operator()(OSSL_PARAM_BLD* p) const { OSSL_PARAM_BLD_free(p); }
};
struct ParamDeleter {
    void operator()(OSSL_PARAM* p) const { OSSL_PARAM_free(p); }
};

using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, EvpCipherCtxDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, EvpMdCtxDeleter>;
using PkeyPtr = std::unique_ptr<EVP_PKEY, EvpPkeyDeleter>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, EvpPkeyCtxDeleter>;
using BnPtr = std::unique_ptr<BIGNUM, BnDeleter>;
using BnCtxPtr = std::unique_ptr<BN_CTX, BnCtxDeleter>;
using PointPtr = std::unique_ptr<EC_POINT, PointDeleter>;
using ParamBldPtr = std::unique_ptr<OSSL_PARAM_BLD, ParamBldDeleter>;
using ParamPtr = std::unique_ptr<OSSL_PARAM, ParamDeleter>;

inline constexpr const char* kCurveName = "prime256v1";

inline const EC_GROUP* curve_group()
{
    static EC_GROUP* group = [] {
        EC_GROUP* g = EC_GROUP_new_by_curve_name(NID_X9_62_prime256v1);
        if (!g)
            throw Error("failed to load P-256 group");
        return g;
    }();
    return group;
}

inline const BIGNUM* curve_order()
{
    return EC_GROUP_get0_order(curve_group());
}

inline BnPtr bn_from_bytes(ByteView b)
{
    BnPtr bn(BN_bin2bn(b.data(), static_cast<int>(b.size()), nullptr));
    if (!bn)
        throw Error("BN_bin2bn failed");
    return bn;
}

inline Bytes bn_to_padded32(const BIGNUM* bn)
{
    Bytes out(32, 0);
    if (BN_bn2binpad(bn, out.data(), 32) != 32)
        throw Error("BN_bn2binpad failed");
    return out;
}

inline Bytes point_to_bytes(const EC_POINT* p)
{
    BnCtxPtr ctx(BN_CTX_new());
    Bytes out(33, 0);
    std::size_t n = EC_POINT_point2oct(curve_group(), p, POINT_CONVERSION_COMPRESSED,
                                       out.data(), out.size(), ctx.get());
    if (n != 33)
        throw Error("point encode failed");
    return out;
}

inline PointPtr point_from_bytes(ByteView b)
{
    BnCtxPtr ctx(BN_CTX_new());
    PointPtr p(EC_POINT_new(curve_group()));
    if (!p || EC_POINT_oct2point(curve_group(), p.get(), b.data(), b.size(), ctx.get()) != 1)
        throw Error("invalid curve point");
    return p;
}

// public = scalar * G, compressed.
inline Bytes scalar_mul_base(const BIGNUM* scalar)
{
    BnCtxPtr ctx(BN_CTX_new());
    PointPtr p(EC_POINT_new(curve_group()));
    if (!p || EC_POINT_mul(curve_group(), p.get(), scalar, nullptr, nullptr, ctx.get()) != 1)
        throw Error("scalar multiplication failed");
    return point_to_bytes(p.get());
}

// x-coordinate of scalar * peer, padded to 32 bytes.
inline Bytes ecdh_x(const BIGNUM* scalar, const EC_POINT* peer)
{
    BnCtxPtr ctx(BN_CTX_new());
    PointPtr shared(EC_POINT_new(curve_group()));
    if (!shared ||
        EC_POINT_mul(curve_group(), shared.get(), nullptr, peer, scalar, ctx.get()) != 1)
        throw Error("key agreement failed");
    if (EC_POINT_is_at_infinity(curve_group(), shared.get()))
        throw Error("key agreement produced the point at infinity");
    BnPtr x(BN_new());
    BnPtr y(BN_new());
    if (!x || !y ||
        EC_POINT_get_affine_coordinates(curve_group(), shared.get(), x.get(), y.get(),
                                        ctx.get()) != 1)
        throw Error("affine coordinate extraction failed");
    return bn_to_padded32(x.get());
}

// Build an EVP_PKEY for ECDSA from raw key material. Private keys must be
// accompanied by their public point.
inline PkeyPtr make_ec_pkey(const Bytes* secret32, const Bytes& public_point)
{
    ParamBldPtr bld(OSSL_PARAM_BLD_new());
    if (!bld)
        throw Error("OSSL_PARAM_BLD_new failed");
    if (OSSL_PARAM_BLD_push_utf8_string(bld.get(), OSSL_PKEY_PARAM_GROUP_NAME, kCurveName,
                                        0) != 1)
        throw Error("param push failed");
    BnPtr priv;
    if (secret32) {
        priv = bn_from_bytes(*secret32);
        if (OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_PRIV_KEY, priv.get()) != 1)
            throw Error("param push failed");
    }
    if (OSSL_PARAM_BLD_push_octet_string(bld.get(), OSSL_PKEY_PARAM_PUB_KEY,
                                         public_point.data(), public_point.size()) != 1)
        throw Error("param push failed");
    ParamPtr params(OSSL_PARAM_BLD_to_param(bld.get()));
    if (!params)
        throw Error("param build failed");

    PkeyCtxPtr ctx(EVP_PKEY_CTX_new_from_name(nullptr, "EC", nullptr));
    if (!ctx || EVP_PKEY_fromdata_init(ctx.get()) != 1)
        throw Error("EVP_PKEY_fromdata_init failed");
    EVP_PKEY* raw = nullptr;
    int selection = secret32 ? EVP_PKEY_KEYPAIR : EVP_PKEY_PUBLIC_KEY;
    if (EVP_PKEY_fromdata(ctx.get(), &raw, selection, params.get()) != 1 || !raw)
        throw Error("EVP_PKEY_fromdata failed");
    return PkeyPtr(raw);
}

} // namespace detail

// AES-256-GCM with an explicit nonce. Building block for the keyed
// encryption below and for pinned test vectors.
inline Ciphertext aead_seal(const Hash256& key, Bytes nonce, ByteView plaintext)
{
    if (nonce.size() != 12)
        throw Error("nonce must be 12 bytes");
    detail::CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, 12, nullptr) != 1 ||
        EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) != 1)
        throw Error("cipher init failed");

    Ciphertext ct;
    ct.nonce_iv = std::move(nonce);
    ct.body.resize(plaintext.size() + 16);
    int len = 0;
    if (!plaintext.empty() &&
        EVP_EncryptUpdate(ctx.get(), ct.body.data(), &len, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1)
        throw Error("encrypt failed");
    int fin = 0;
    if (EVP_EncryptFinal_ex(ctx.get(), ct.body.data() + len, &fin) != 1)
        throw Error("encrypt failed");
    ct.body.resize(static_cast<std::size_t>(len + fin));
    ct.tag.resize(16);
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, 16, ct.tag.data()) != 1)
        throw Error("tag extraction failed");
    return ct;
}

inline Bytes aead_open(const Hash256& key, const Ciphertext& ct)
{
    if (ct.nonce_iv.size() != 12 || ct.tag.size() != 16)
        throw AuthError("malformed ciphertext");
    detail::CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, 12, nullptr) != 1 ||
        EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), ct.nonce_iv.data()) != 1)
        throw Error("cipher init failed");

    Bytes out(ct.body.size() + 16);
    int len = 0;
    if (!ct.body.empty() &&
        EVP_DecryptUpdate(ctx.get(), out.data(), &len, ct.body.data(),
                          static_cast<int>(ct.body.size())) != 1)
        throw Error("decrypt failed");
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, 16,
                            const_cast<std::uint8_t*>(ct.tag.data())) != 1)
        throw Error("tag set failed");
    int fin = 0;
    if (EVP_DecryptFinal_ex(ctx.get(), out.data() + len, &fin) != 1)
        throw AuthError("authentication failed");
    out.resize(static_cast<std::size_t>(len + fin));
    return out;
}

inline Ciphertext sym_encrypt_with_key(const DerivedKey& key, ByteView plaintext, Rng& rng)
{
    return aead_seal(key.bytes, rng.bytes(12), plaintext);
}

inline Bytes sym_decrypt_with_key(const DerivedKey& key, const Ciphertext& ct)
{
    return aead_open(key.bytes, ct);
}

// Symmetric encryption keyed by the derivation over ordered parts.
inline Ciphertext sym_encrypt(const std::vector<Bytes>& key_parts, ByteView plaintext, Rng& rng)
{
    return sym_encrypt_with_key(derive_key(key_parts), plaintext, rng);
}

inline Bytes sym_decrypt(const std::vector<Bytes>& key_parts, const Ciphertext& ct)
{
    return sym_decrypt_with_key(derive_key(key_parts), ct);
}

// One-time asymmetric keypair on P-256. The secret is a 32-byte big-endian
// scalar; the public key is the compressed point secret * G.
struct OtakKeyPair {
    Bytes secret;
    Bytes public_key;
    bool operator==(const OtakKeyPair&) const = default;
};

// Deterministic keypair from ((eta+1)*rho, tau_c, qt, salt). The digest is
// reduced into the scalar field; a counter byte is appended and the digest
// recomputed in the (negligible-probability) case the reduction hits zero.
inline OtakKeyPair generate_otak(std::uint64_t eta, std::uint64_t rho, std::uint64_t tau_c,
                                 const Bytes& qt, const SaltHash& salt)
{
    if (!is_prime_u64(rho))
        throw Error("rho not prime");
    if (rho <= (1ull << 20))
        throw Error("rho too small");
    if (tau_c == 0)
        throw Error("tau_c must be positive");

    unsigned __int128 product = (static_cast<unsigned __int128>(eta) + 1) * rho;
    const std::vector<Bytes> base = {be_minimal(product), be64_bytes(tau_c), qt,
                                     as_bytes(salt.bytes)};
    for (int attempt = 0; attempt < 256; ++attempt) {
        std::vector<Bytes> parts = base;
        if (attempt > 0)
            parts.push_back(Bytes{static_cast<std::uint8_t>(attempt - 1)});
        DerivedKey d = derive_key(parts);
        detail::BnPtr s = detail::bn_from_bytes(d.bytes);
        detail::BnCtxPtr ctx(BN_CTX_new());
        if (BN_mod(s.get(), s.get(), detail::curve_order(), ctx.get()) != 1)
            throw Error("scalar reduction failed");
        if (BN_is_zero(s.get()))
            continue;
        OtakKeyPair pair;
        pair.secret = detail::bn_to_padded32(s.get());
        pair.public_key = detail::scalar_mul_base(s.get());
        return pair;
    }
    throw Error("could not derive a nonzero scalar");
}

// Hybrid encryption to a public key: ephemeral P-256 key agreement feeds
// the key derivation, then the authenticated cipher carries the payload.
// body = ephemeral_public (33 bytes) || encrypted payload.
inline Ciphertext asym_encrypt(const Bytes& public_key, ByteView plaintext, Rng& rng)
{
    detail::PointPtr peer = detail::point_from_bytes(public_key);

    detail::BnCtxPtr bnctx(BN_CTX_new());
    detail::BnPtr eph;
    do {
        eph = detail::bn_from_bytes(rng.bytes(32));
        if (BN_mod(eph.get(), eph.get(), detail::curve_order(), bnctx.get()) != 1)
            throw Error("scalar reduction failed");
    } while (BN_is_zero(eph.get()));

    Bytes eph_pub = detail::scalar_mul_base(eph.get());
    Bytes shared_x = detail::ecdh_x(eph.get(), peer.get());
    DerivedKey key = derive_key({shared_x, eph_pub});

    Ciphertext ct = aead_seal(key.bytes, rng.bytes(12), plaintext);
    ct.body.insert(ct.body.begin(), eph_pub.begin(), eph_pub.end());
    return ct;
}

inline Bytes asym_decrypt(const Bytes& secret, const Ciphertext& ct)
{
    if (ct.body.size() < 33)
        throw AuthError("ciphertext too short");
    Bytes eph_pub(ct.body.begin(), ct.body.begin() + 33);
    detail::PointPtr peer;
    try {
        peer = detail::point_from_bytes(eph_pub);
    } catch (const Error&) {
        throw AuthError("invalid ephemeral key");
    }
    detail::BnPtr sk = detail::bn_from_bytes(secret);
    Bytes shared_x = detail::ecdh_x(sk.get(), peer.get());
    DerivedKey key = derive_key({shared_x, eph_pub});

    Ciphertext inner;
    inner.nonce_iv = ct.nonce_iv;
    inner.tag = ct.tag;
    inner.body.assign(ct.body.begin() + 33, ct.body.end());
    return aead_open(key.bytes, inner);
}

// ECDSA over SHA-256; exists so tests can confirm public = secret * G via a
// sign/verify round trip. Signatures never travel on the wire.
inline Bytes ecdsa_sign(const Bytes& secret, ByteView message)
{
    detail::BnPtr sk = detail::bn_from_bytes(secret);
    Bytes pub = detail::scalar_mul_base(sk.get());
    detail::PkeyPtr pkey = detail::make_ec_pkey(&secret, pub);

    detail::MdCtxPtr md(EVP_MD_CTX_new());
    if (!md || EVP_DigestSignInit(md.get(), nullptr, EVP_sha256(), nullptr, pkey.get()) != 1)
        throw Error("sign init failed");
    std::size_t siglen = 0;
    if (EVP_DigestSign(md.get(), nullptr, &siglen, message.data(), message.size()) != 1)
        throw Error("sign failed");
    Bytes sig(siglen);
    if (EVP_DigestSign(md.get(), sig.data(), &siglen, message.data(), message.size()) != 1)
        throw Error("sign failed");
    sig.resize(siglen);
    return sig;
}

inline bool ecdsa_verify(const Bytes& public_key, ByteView message, const Bytes& sig)
{
    detail::PkeyPtr pkey = detail::make_ec_pkey(nullptr, public_key);
    detail::MdCtxPtr md(EVP_MD_CTX_new());
    if (!md || EVP_DigestVerifyInit(md.get(), nullptr, EVP_sha256(), nullptr, pkey.get()) != 1)
        throw Error("verify init failed");
    return EVP_DigestVerify(md.get(), sig.data(), sig.size(), message.data(), message.size()) == 1;
}

} // namespace bsssqs
