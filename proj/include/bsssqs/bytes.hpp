#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bsssqs {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Authentication / integrity failures get their own type so callers can
// tell tampering apart from malformed input or misuse.
struct AuthError : Error {
    using Error::Error;
};

inline Bytes to_bytes(std::string_view s)
{
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(ByteView b)
{
    return std::string(b.begin(), b.end());
}

inline void append(Bytes& out, ByteView b)
{
    out.insert(out.end(), b.begin(), b.end());
}

inline void append_u32_be(Bytes& out, std::uint32_t v)
{
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void append_u64_be(Bytes& out, std::uint64_t v)
{
    for (int shift = 56; shift >= 0; shift -= 8)
        out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline Bytes be64_bytes(std::uint64_t v)
{
    Bytes out;
    out.reserve(8);
    append_u64_be(out, v);
    return out;
}

// Minimal big-endian encoding of a 128-bit value (no leading zero bytes).
inline Bytes be_minimal(unsigned __int128 v)
{
    if (v == 0)
        return Bytes{0};
    Bytes out;
    while (v != 0) {
        out.insert(out.begin(), static_cast<std::uint8_t>(v & 0xff));
        v >>= 8;
    }
    return out;
}

inline void append_prefixed(Bytes& out, ByteView b)
{
    append_u32_be(out, static_cast<std::uint32_t>(b.size()));
    append(out, b);
}

inline std::string hex_encode(ByteView b)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(b.size() * 2);
    for (std::uint8_t c : b) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 0x0f]);
    }
    return out;
}

inline Bytes hex_decode(std::string_view s)
{
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9')
            return c - '0';
        if (c >= 'a' && c <= 'f')
            return c - 'a' + 10;
        if (c >= 'A' && c <= 'F')
            return c - 'A' + 10;
        return -1;
    };
    if (s.size() % 2 != 0)
        throw Error("hex string has odd length");
    Bytes out;
    out.reserve(s.size() / 2);
    for (std::size_t i = 0; i < s.size(); i += 2) {
        int hi = nibble(s[i]);
        int lo = nibble(s[i + 1]);
        if (hi < 0 || lo < 0)
            throw Error("invalid hex digit");
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

// Sequential reader over a byte view; throws on truncation instead of
// returning partial data.
class ByteReader {
public:
    explicit ByteReader(ByteView data) : data_(data) {}

    std::size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ == data_.size(); }

    std::uint8_t read_u8()
    {
        need(1);
        return data_[pos_++];
    }

    std::uint32_t read_u32_be()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v = (v << 8) | data_[pos_++];
        return v;
    }

    std::uint64_t read_u64_be()
    {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v = (v << 8) | data_[pos_++];
        return v;
    }

    Bytes read(std::size_t n)
    {
        need(n);
        Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }

    Bytes read_prefixed() { return read(read_u32_be()); }

private:
    void need(std::size_t n) const
    {
        if (remaining() < n)
            throw Error("truncated input");
    }

    ByteView data_;
    std::size_t pos_ = 0;
};

} // namespace bsssqs
