#include <catch2/catch_amalgamated.hpp>

#include "bsssqs/bytes.hpp"
#include "bsssqs/rng.hpp"

using namespace bsssqs;

TEST_CASE("hex encode/decode round trip")
{
    Bytes b = {0x00, 0x01, 0xab, 0xff, 0x10};
    REQUIRE(hex_encode(b) == "0001abff10");
    REQUIRE(hex_decode("0001abff10") == b);
    REQUIRE(hex_decode("0001ABFF10") == b);
}

TEST_CASE("hex decode rejects bad input")
{
    REQUIRE_THROWS_AS(hex_decode("abc"), Error);
    REQUIRE_THROWS_AS(hex_decode("zz"), Error);
}

TEST_CASE("big-endian codecs")
{
    Bytes out;
    append_u32_be(out, 0x01020304);
    REQUIRE(out == Bytes{0x01, 0x02, 0x03, 0x04});
    REQUIRE(be64_bytes(0x0102030405060708ull) ==
            Bytes{0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08});

    ByteReader r(out);
    REQUIRE(r.read_u32_be() == 0x01020304);
    REQUIRE(r.done());
}

TEST_CASE("be_minimal drops leading zeros")
{
    REQUIRE(be_minimal(0) == Bytes{0x00});
    REQUIRE(be_minimal(1) == Bytes{0x01});
    REQUIRE(be_minimal(0x1234) == Bytes{0x12, 0x34});
    unsigned __int128 big = (static_cast<unsigned __int128>(1) << 64) + 2;
    REQUIRE(be_minimal(big) == Bytes{0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x02});
}

TEST_CASE("length-prefixed reader")
{
    Bytes buf;
    append_prefixed(buf, to_bytes("hello"));
    append_prefixed(buf, Bytes{});
    ByteReader r(buf);
    REQUIRE(to_string(r.read_prefixed()) == "hello");
    REQUIRE(r.read_prefixed().empty());
    REQUIRE(r.done());
}

TEST_CASE("reader throws on truncation")
{
    Bytes buf = {0x00, 0x00, 0x00, 0x05, 'h', 'i'};
    ByteReader r(buf);
    REQUIRE_THROWS_AS(r.read_prefixed(), Error);
}

TEST_CASE("rng below is in range and deterministic")
{
    Rng a(7);
    Rng b(7);
    for (int i = 0; i < 1000; ++i) {
        std::uint64_t va = a.below(17);
        REQUIRE(va < 17);
        REQUIRE(va == b.below(17));
    }
    REQUIRE(a.bytes(5).size() == 5);
    REQUIRE_THROWS_AS(a.below(0), Error);
}

TEST_CASE("rng streams differ by seed")
{
    Rng a(1);
    Rng b(2);
    REQUIRE(a.bytes(32) != b.bytes(32));
}
