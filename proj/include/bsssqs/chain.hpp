#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "bsssqs/bytes.hpp"
#include "bsssqs/crypto.hpp"
#include "bsssqs/rng.hpp"

namespace bsssqs {

struct BlockHeader {
    Hash256 prev_hash{};
    std::uint64_t timestamp = 0;        // tau_c of the encryption batch
    std::uint64_t last_access_time = 0; // mutated only by the tamper alarm
    std::uint64_t creation_time = 0;
    std::uint64_t nonce = 0;

    bool operator==(const BlockHeader&) const = default;
};

struct BlockTimes {
    std::uint64_t timestamp = 0;
    std::uint64_t creation_time = 0;
};

struct Block {
    BlockHeader header;
    Bytes payload;
    Hash256 hash{};

    bool operator==(const Block&) const = default;

    // Canonical serialization: fixed-width big-endian header fields in
    // declaration order, then the length-prefixed payload. The block hash
    // is SHA-256 over exactly these bytes.
    Bytes canonical() const
    {
        Bytes out;
        out.reserve(32 + 4 * 8 + 4 + payload.size());
        append(out, header.prev_hash);
        append_u64_be(out, header.timestamp);
        append_u64_be(out, header.last_access_time);
        append_u64_be(out, header.creation_time);
        append_u64_be(out, header.nonce);
        append_prefixed(out, payload);
        return out;
    }
};

inline unsigned leading_zero_bits(const Hash256& h)
{
    unsigned bits = 0;
    for (std::uint8_t byte : h) {
        if (byte == 0) {
            bits += 8;
            continue;
        }
        for (int i = 7; i >= 0; --i) {
            if (byte & (1u << i))
                return bits;
            ++bits;
        }
    }
    return bits;
}

// Single-writer hash-linked block store. Tampering with any stored byte is
// detectable by revalidation; the alarm path deliberately breaks the chain
// and re-mining repairs it.
class Chain {
public:
    static constexpr char kMagic[4] = {'Q', 'B', 'C', '1'};

    Chain() = default;

    static Block make_genesis(std::uint64_t tau_c, unsigned difficulty, Rng& rng)
    {
        if (tau_c == 0)
            throw Error("tau_c must be positive");
        Block b;
        b.header.prev_hash.fill(0);
        b.header.timestamp = tau_c;
        b.header.creation_time = tau_c;
        b.header.last_access_time = tau_c;
        b.payload = sym_encrypt({be64_bytes(tau_c)}, rng.bytes(32), rng).serialize();
        mine(b, difficulty);
        return b;
    }

    static Chain create(std::uint64_t tau_c, unsigned difficulty, Rng& rng)
    {
        Chain c;
        c.difficulty_ = difficulty;
        c.blocks_.push_back(make_genesis(tau_c, difficulty, rng));
        return c;
    }

    const std::vector<Block>& blocks() const { return blocks_; }
    Block& mutable_block(std::size_t i)
    {
        if (i >= blocks_.size())
            throw Error("block index out of range");
        return blocks_[i];
    }
    std::size_t size() const { return blocks_.size(); }
    unsigned difficulty() const { return difficulty_; }

    const Block& append(const Bytes& payload, BlockTimes times)
    {
        if (validate())
            throw Error("chain broken");
        Block b;
        b.header.prev_hash = blocks_.back().hash;
        b.header.timestamp = times.timestamp;
        b.header.creation_time = times.creation_time;
        b.header.last_access_time = times.creation_time;
        b.payload = payload;
        mine(b, difficulty_);
        blocks_.push_back(std::move(b));
        return blocks_.back();
    }

    // First index whose hash, difficulty, or link fails to recompute;
    // nullopt when the chain is intact.
    std::optional<std::size_t> validate() const
    {
        if (blocks_.empty())
            return 0;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const Block& b = blocks_[i];
            if (i == 0) {
                if (b.header.prev_hash != Hash256{})
                    return i;
            } else if (b.header.prev_hash != blocks_[i - 1].hash) {
                return i;
            }
            Hash256 recomputed = sha256(b.canonical());
            if (recomputed != b.hash)
                return i;
            if (leading_zero_bits(recomputed) < difficulty_)
                return i;
        }
        return std::nullopt;
    }

    // Alarm path: stamp the access time and scramble the nonce without
    // re-mining, leaving the chain verifiably broken at `index`.
    void touch_unauthorized(std::size_t index, std::uint64_t now, Rng& rng)
    {
        if (index >= blocks_.size())
            throw Error("block index out of range");
        blocks_[index].header.last_access_time = now;
        blocks_[index].header.nonce = rng.next_u64();
    }

    // Repair from the first broken index onward: relink, re-mine, rehash.
    // No-op on an intact chain.
    void remine()
    {
        std::optional<std::size_t> broken = validate();
        if (!broken)
            return;
        for (std::size_t i = *broken; i < blocks_.size(); ++i) {
            blocks_[i].header.prev_hash = (i == 0) ? Hash256{} : blocks_[i - 1].hash;
            mine(blocks_[i], difficulty_);
        }
    }

    // Persistence format: magic "QBC1", one difficulty byte, then each
    // block's canonical serialization back to back.
    Bytes serialize() const
    {
        Bytes out;
        out.insert(out.end(), kMagic, kMagic + 4);
        out.push_back(static_cast<std::uint8_t>(difficulty_));
        for (const Block& b : blocks_)
            append(out, b.canonical());
        return out;
    }

    static Chain deserialize(ByteView data)
    {
        ByteReader r(data);
        Bytes magic = r.read(4);
        if (!std::equal(magic.begin(), magic.end(), kMagic))
            throw Error("bad chain magic");
        Chain c;
        c.difficulty_ = r.read_u8();
        while (!r.done()) {
            Block b;
            Bytes prev = r.read(32);
            std::copy(prev.begin(), prev.end(), b.header.prev_hash.begin());
            b.header.timestamp = r.read_u64_be();
            b.header.last_access_time = r.read_u64_be();
            b.header.creation_time = r.read_u64_be();
            b.header.nonce = r.read_u64_be();
            b.payload = r.read_prefixed();
            b.hash = sha256(b.canonical());
            c.blocks_.push_back(std::move(b));
        }
        if (c.blocks_.empty())
            throw Error("empty chain file");
        return c;
    }

private:
    static void mine(Block& b, unsigned difficulty)
    {
        for (std::uint64_t nonce = 0;; ++nonce) {
            b.header.nonce = nonce;
            Hash256 h = sha256(b.canonical());
            if (leading_zero_bits(h) >= difficulty) {
                b.hash = h;
                return;
            }
        }
    }

    std::vector<Block> blocks_;
    unsigned difficulty_ = 0;
};

} // namespace bsssqs
