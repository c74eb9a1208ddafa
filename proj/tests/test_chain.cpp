#include <catch2/catch_amalgamated.hpp>

#include "bsssqs/chain.hpp"

using namespace bsssqs;

namespace {

Chain small_chain(unsigned difficulty, std::size_t payload_blocks, std::uint64_t seed = 7)
{
    Rng rng(seed);
    Chain c = Chain::create(1700000000001ull, difficulty, rng);
    for (std::size_t i = 0; i < payload_blocks; ++i)
        c.append(rng.bytes(24), {1700000000001ull, 1700000000002ull + i});
    return c;
}

} // namespace

TEST_CASE("genesis block has zeroed previous hash and meets difficulty")
{
    Rng rng(1);
    Block g = Chain::make_genesis(1700000000001ull, 4, rng);
    REQUIRE(g.header.prev_hash == Hash256{});
    REQUIRE(leading_zero_bits(g.hash) >= 4);
    REQUIRE(g.header.creation_time == g.header.last_access_time);

    Rng other(2);
    Block g2 = Chain::make_genesis(1700000000001ull, 4, other);
    REQUIRE(g.hash != g2.hash); // random payload text
}

TEST_CASE("append extends a valid chain")
{
    Chain c = small_chain(0, 1);
    REQUIRE(c.size() == 2);
    REQUIRE_FALSE(c.validate());
    REQUIRE(c.blocks()[1].header.prev_hash == c.blocks()[0].hash);
}

TEST_CASE("fifty appended payloads keep the chain valid")
{
    Chain c = small_chain(0, 50);
    REQUIRE(c.size() == 51);
    REQUIRE_FALSE(c.validate());
}

TEST_CASE("append to a broken chain is refused")
{
    Chain c = small_chain(0, 2);
    c.mutable_block(1).payload[0] ^= 0x01;
    REQUIRE_THROWS_WITH(c.append({0x01}, {1, 2}), "chain broken");
}

TEST_CASE("every single-byte payload mutation is flagged at its block")
{
    Chain c = small_chain(0, 4); // 5 blocks, difficulty 0
    for (std::size_t b = 0; b < c.size(); ++b) {
        for (std::size_t i = 0; i < c.blocks()[b].payload.size(); ++i) {
            Chain mutated = c;
            mutated.mutable_block(b).payload[i] ^= 0xff;
            auto broken = mutated.validate();
            REQUIRE(broken.has_value());
            REQUIRE(*broken == b);
        }
    }
}

TEST_CASE("every single-byte header mutation breaks validation")
{
    Chain c = small_chain(0, 4);
    auto mutate_and_check = [&](std::size_t b, auto field_mutator) {
        Chain mutated = c;
        field_mutator(mutated.mutable_block(b).header);
        REQUIRE(mutated.validate().has_value());
    };
    for (std::size_t b = 0; b < c.size(); ++b) {
        for (std::size_t i = 0; i < 32; ++i)
            mutate_and_check(b, [i](BlockHeader& h) { h.prev_hash[i] ^= 0xff; });
        for (int shift = 0; shift < 64; shift += 8) {
            mutate_and_check(b, [shift](BlockHeader& h) { h.timestamp ^= (0xffull << shift); });
            mutate_and_check(b,
                             [shift](BlockHeader& h) { h.last_access_time ^= (0xffull << shift); });
            mutate_and_check(b, [shift](BlockHeader& h) { h.creation_time ^= (0xffull << shift); });
            mutate_and_check(b, [shift](BlockHeader& h) { h.nonce ^= (0xffull << shift); });
        }
    }
}

TEST_CASE("swapping interior blocks breaks the link structure")
{
    Chain c = small_chain(0, 4);
    Chain swapped = c;
    std::swap(swapped.mutable_block(1), swapped.mutable_block(2));
    REQUIRE(swapped.validate().has_value());
}

TEST_CASE("unauthorized touch breaks the chain at the touched index")
{
    Chain c = small_chain(0, 4);
    Rng rng(99);
    c.touch_unauthorized(2, 1800000000000ull, rng);
    auto broken = c.validate();
    REQUIRE(broken.has_value());
    REQUIRE(*broken == 2);

    // double touch: still broken at the same index
    c.touch_unauthorized(2, 1800000000001ull, rng);
    REQUIRE(c.validate() == std::optional<std::size_t>{2});

    REQUIRE_THROWS_AS(c.touch_unauthorized(99, 1, rng), Error);
}

TEST_CASE("remine repairs a touched chain and changes downstream hashes")
{
    Chain c = small_chain(3, 4);
    std::vector<Hash256> before;
    for (const Block& b : c.blocks())
        before.push_back(b.hash);

    Rng rng(5);
    c.touch_unauthorized(2, 1800000000000ull, rng);
    c.remine();
    REQUIRE_FALSE(c.validate());
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (i < 2)
            REQUIRE(c.blocks()[i].hash == before[i]);
        else
            REQUIRE(c.blocks()[i].hash != before[i]);
        REQUIRE(leading_zero_bits(c.blocks()[i].hash) >= 3);
    }
}

TEST_CASE("remine is a no-op on a valid chain")
{
    Chain c = small_chain(2, 3);
    std::vector<Hash256> before;
    for (const Block& b : c.blocks())
        before.push_back(b.hash);
    c.remine();
    for (std::size_t i = 0; i < c.size(); ++i)
        REQUIRE(c.blocks()[i].hash == before[i]);
}

TEST_CASE("chain serialization layout matches the documented format")
{
    Rng rng(3);
    Chain c = Chain::create(0x0102030405060708ull, 0, rng);
    Bytes ser = c.serialize();

    // Assemble the expected bytes by hand from the block fields.
    const Block& g = c.blocks()[0];
    Bytes expected = {'Q', 'B', 'C', '1', 0x00};
    append(expected, g.header.prev_hash);
    append_u64_be(expected, g.header.timestamp);
    append_u64_be(expected, g.header.last_access_time);
    append_u64_be(expected, g.header.creation_time);
    append_u64_be(expected, g.header.nonce);
    append_prefixed(expected, g.payload);
    REQUIRE(ser == expected);
}

TEST_CASE("chain serialization round trips and rejects corrupt files")
{
    Chain c = small_chain(2, 5, 11);
    Bytes ser = c.serialize();
    Chain back = Chain::deserialize(ser);
    REQUIRE(back.size() == c.size());
    REQUIRE(back.difficulty() == c.difficulty());
    REQUIRE_FALSE(back.validate());
    for (std::size_t i = 0; i < c.size(); ++i)
        REQUIRE(back.blocks()[i] == c.blocks()[i]);

    Bytes bad_magic = ser;
    bad_magic[0] = 'X';
    REQUIRE_THROWS_AS(Chain::deserialize(bad_magic), Error);

    Bytes truncated = ser;
    truncated.resize(truncated.size() - 3);
    REQUIRE_THROWS_AS(Chain::deserialize(truncated), Error);

    REQUIRE_THROWS_AS(Chain::deserialize(Bytes{'Q', 'B', 'C', '1', 0x00}), Error);
}

TEST_CASE("mining terminates promptly at moderate difficulty")
{
    Rng rng(13);
    Chain c = Chain::create(1700000000001ull, 10, rng);
    c.append(rng.bytes(32), {1700000000001ull, 1700000000002ull});
    REQUIRE_FALSE(c.validate());
    for (const Block& b : c.blocks())
        REQUIRE(leading_zero_bits(b.hash) >= 10);
}
