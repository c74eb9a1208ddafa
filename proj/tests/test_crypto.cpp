#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "bsssqs/crypto.hpp"

using namespace bsssqs;

namespace {

Bytes B(const char* s)
{
    return to_bytes(s);
}

} // namespace

TEST_CASE("derive_key matches independently computed vectors")
{
    // SHA-256 over u32-be length-prefixed parts, computed with hashlib.
    REQUIRE(hex_encode(derive_key({B("a"), B("b")}).bytes) ==
            "16275ef0f5d0eb9dd9e0a53277549fda5c886358a6872df23c797b13e11455bc");
    REQUIRE(hex_encode(derive_key({B("ab")}).bytes) ==
            "d2f295bb8c9d190af78252b52741eb32ccfbe1fc59942d13af20a763f619670e");
    REQUIRE(hex_encode(derive_key({B("ab"), Bytes{}}).bytes) ==
            "421fb38456f1afe5c04ed5c0c11c88c415c03ba8cc8eab2528a1fd847fa83cd7");
    REQUIRE(hex_encode(derive_key({B("qt-1"), B("pw-1")}).bytes) ==
            "2e73fa5deb3ffa4f05fd071b371e158771829c8cce01c526464dcc63a203f2cf");
    REQUIRE(hex_encode(derive_key({be64_bytes(1700000000000ull)}).bytes) ==
            "5cf0c701eedf36a84acfbf0415ec25fad238fcd176a3372dc56151abd7c3f1dd");
}

TEST_CASE("derive_key length prefixing forbids boundary ambiguity")
{
    REQUIRE(derive_key({B("a"), B("b")}) != derive_key({B("ab")}));
    REQUIRE(derive_key({B("a"), B("b")}) != derive_key({B("ab"), Bytes{}}));
    REQUIRE(derive_key({B("x"), B("y")}) == derive_key({B("x"), B("y")}));
    REQUIRE_THROWS_WITH(derive_key({}), "no key material");
}

TEST_CASE("derive_key has no collisions over 10k random inputs")
{
    Rng rng(123);
    std::set<Hash256> seen;
    for (int i = 0; i < 10000; ++i) {
        Bytes x = rng.bytes(24);
        DerivedKey k = derive_key({x});
        // direct re-hash of the canonical length-prefixed form
        Bytes canon;
        append_u32_be(canon, static_cast<std::uint32_t>(x.size()));
        append(canon, x);
        REQUIRE(k.bytes == sha256(canon));
        seen.insert(k.bytes);
    }
    REQUIRE(seen.size() == 10000);
}

TEST_CASE("sha256 matches the published standard vectors")
{
    REQUIRE(hex_encode(sha256(Bytes{})) ==
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    REQUIRE(hex_encode(sha256(B("abc"))) ==
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    REQUIRE(sha256(B("abc")) == sha256(B("abc")));
}

TEST_CASE("sha256 avalanche on a one-bit flip")
{
    Bytes a = B("some input");
    Bytes b = a;
    b[0] ^= 0x01;
    REQUIRE(sha256(a) != sha256(b));
}

TEST_CASE("aead matches vectors computed with an independent implementation")
{
    std::ifstream in(std::string(BSSSQS_GOLDEN_DIR) + "/aead_vectors.txt");
    REQUIRE(in.good());
    std::string line;
    int checked = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ss(line);
        std::string key_hex, nonce_hex, pt_hex, ser_hex;
        ss >> key_hex >> nonce_hex >> pt_hex >> ser_hex;
        Hash256 key = hash_from_hex(key_hex);
        Bytes nonce = hex_decode(nonce_hex);
        Bytes pt = pt_hex == "-" ? Bytes{} : hex_decode(pt_hex);
        Ciphertext ct = aead_seal(key, nonce, pt);
        REQUIRE(hex_encode(ct.serialize()) == ser_hex);
        REQUIRE(aead_open(key, Ciphertext::deserialize(hex_decode(ser_hex))) == pt);
        ++checked;
    }
    REQUIRE(checked == 3);
}

TEST_CASE("sym round trip and tamper detection")
{
    Rng rng(9);
    std::vector<Bytes> key = {B("part-1"), be64_bytes(42)};
    Bytes msg = B("a question paper");
    Ciphertext ct = sym_encrypt(key, msg, rng);
    REQUIRE(sym_decrypt(key, ct) == msg);

    SECTION("flipping any ciphertext byte fails authentication")
    {
        for (std::size_t i = 0; i < ct.body.size(); ++i) {
            Ciphertext bad = ct;
            bad.body[i] ^= 0x01;
            REQUIRE_THROWS_AS(sym_decrypt(key, bad), AuthError);
        }
        Ciphertext bad_tag = ct;
        bad_tag.tag[0] ^= 0x01;
        REQUIRE_THROWS_AS(sym_decrypt(key, bad_tag), AuthError);
    }

    SECTION("reordered key parts fail authentication")
    {
        REQUIRE_THROWS_AS(sym_decrypt({be64_bytes(42), B("part-1")}, ct), AuthError);
    }

    SECTION("a different key fails authentication")
    {
        REQUIRE_THROWS_AS(sym_decrypt({B("part-2"), be64_bytes(42)}, ct), AuthError);
    }
}

TEST_CASE("ciphertext serialization round trips")
{
    Rng rng(11);
    Ciphertext ct = sym_encrypt({B("k")}, B("payload"), rng);
    REQUIRE(Ciphertext::deserialize(ct.serialize()) == ct);
    Bytes truncated = ct.serialize();
    truncated.resize(truncated.size() - 1);
    REQUIRE_THROWS_AS(Ciphertext::deserialize(truncated), Error);
}

TEST_CASE("make_signature agrees with derive_key and composes with sym ops")
{
    Signature sig = make_signature(B("qt-1"), B("pw-1"));
    REQUIRE(sig.bytes == derive_key({B("qt-1"), B("pw-1")}).bytes);
    REQUIRE(make_signature(B("qt-1"), B("pw-1")) == sig);
    REQUIRE(make_signature(B("a"), B("b")).bytes != make_signature(B("ab"), B("b")).bytes);
    REQUIRE_THROWS_AS(make_signature(Bytes{}, B("pw")), Error);
    REQUIRE_THROWS_AS(make_signature(B("qt"), Bytes{}), Error);

    Rng rng(13);
    Ciphertext ct = sym_encrypt({as_bytes(sig.bytes)}, B("questions"), rng);
    REQUIRE(sym_decrypt({as_bytes(sig.bytes)}, ct) == B("questions"));
}

TEST_CASE("generate_otak is a pure function of its inputs")
{
    Rng rng(17);
    SaltHash salt = SaltHash::random(rng);
    OtakKeyPair a = generate_otak(41, 2750159, 1700000000001ull, B("qt-7"), salt);
    OtakKeyPair b = generate_otak(41, 2750159, 1700000000001ull, B("qt-7"), salt);
    REQUIRE(a == b);
    REQUIRE(a.secret.size() == 32);
    REQUIRE(a.public_key.size() == 33);
}

TEST_CASE("generated pair signs and verifies")
{
    Rng rng(19);
    SaltHash salt = SaltHash::random(rng);
    OtakKeyPair pair = generate_otak(5, 4256233, 1700000000002ull, B("qt-8"), salt);
    Bytes msg = B("prove the key pair is consistent");
    Bytes sig = ecdsa_sign(pair.secret, msg);
    REQUIRE(ecdsa_verify(pair.public_key, msg, sig));
    Bytes other = msg;
    other[0] ^= 0x01;
    REQUIRE_FALSE(ecdsa_verify(pair.public_key, other, sig));
}

TEST_CASE("one-byte salt change yields a different public key")
{
    Rng rng(23);
    SaltHash salt = SaltHash::random(rng);
    SaltHash tweaked = salt;
    tweaked.bytes[31] ^= 0x01;
    OtakKeyPair a = generate_otak(1, 2750159, 1700000000003ull, B("qt"), salt);
    OtakKeyPair b = generate_otak(1, 2750159, 1700000000003ull, B("qt"), tweaked);
    REQUIRE(a.public_key != b.public_key);
}

TEST_CASE("generate_otak validates rho")
{
    Rng rng(29);
    SaltHash salt = SaltHash::random(rng);
    REQUIRE_THROWS_WITH(generate_otak(1, 2750160, 1, B("qt"), salt), "rho not prime");
    REQUIRE_THROWS_WITH(generate_otak(1, 65537, 1, B("qt"), salt), "rho too small");
}

TEST_CASE("asym round trips across payload sizes")
{
    Rng rng(31);
    SaltHash salt = SaltHash::random(rng);
    OtakKeyPair pair = generate_otak(2, 7368787, 1700000000004ull, B("qt"), salt);

    Bytes one = {0x7f};
    REQUIRE(asym_decrypt(pair.secret, asym_encrypt(pair.public_key, one, rng)) == one);

    Bytes big = rng.bytes(1 << 20);
    REQUIRE(asym_decrypt(pair.secret, asym_encrypt(pair.public_key, big, rng)) == big);
}

TEST_CASE("asym decrypt with an unrelated secret fails")
{
    Rng rng(37);
    SaltHash salt = SaltHash::random(rng);
    OtakKeyPair pair = generate_otak(3, 9999991, 1700000000005ull, B("qt"), salt);
    OtakKeyPair other = generate_otak(4, 9999991, 1700000000006ull, B("qt"), salt);
    Ciphertext ct = asym_encrypt(pair.public_key, B("secret message"), rng);
    REQUIRE_THROWS_AS(asym_decrypt(other.secret, ct), AuthError);
}

TEST_CASE("asym encrypt rejects off-curve public keys")
{
    Rng rng(41);
    Bytes junk(33, 0x02);
    junk[1] = 0xff;
    REQUIRE_THROWS_AS(asym_encrypt(junk, B("m"), rng), Error);
}

TEST_CASE("is_prime_u64 agrees with trial division")
{
    auto trial = [](std::uint64_t n) {
        if (n < 2)
            return false;
        for (std::uint64_t d = 2; d * d <= n; ++d)
            if (n % d == 0)
                return false;
        return true;
    };
    for (std::uint64_t n = 0; n < 2000; ++n)
        REQUIRE(is_prime_u64(n) == trial(n));
    REQUIRE(is_prime_u64(24066347));
    REQUIRE(is_prime_u64(179424793));
    REQUIRE(is_prime_u64(2305843009213693951ull)); // 2^61 - 1
    REQUIRE_FALSE(is_prime_u64(561));              // Carmichael
    REQUIRE_FALSE(is_prime_u64(6601));
}
