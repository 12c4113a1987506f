#pragma once

// Little-endian record helpers shared by the dataset and checkpoint containers.

#include "reprompt/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace reprompt::detail {

template <typename T>
void put_le(std::ostream& out, T value)
{
    static_assert(std::is_trivially_copyable_v<T> && (sizeof(T) == 4 || sizeof(T) == 8));
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const U bits = std::bit_cast<U>(value);
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
    out.write(bytes, sizeof(T));
}

template <typename T>
T get_le(std::istream& in)
{
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw Error("unexpected end of file");
    }
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bits |= static_cast<U>(bytes[i]) << (8 * i);
    }
    return std::bit_cast<T>(bits);
}

/// Magic, version and a length-prefixed JSON header.
inline void put_header(std::ostream& out, const char (&magic)[5], std::uint32_t version,
                       const std::string& header)
{
    out.write(magic, 4);
    put_le<std::uint32_t>(out, version);
    put_le<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
}

inline std::string get_header(std::istream& in, const char (&magic)[5], std::uint32_t version)
{
    char got[4];
    if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
        throw Error(std::string("bad magic, expected ") + magic);
    }
    const auto v = get_le<std::uint32_t>(in);
    if (v != version) {
        throw Error("unsupported container version " + std::to_string(v));
    }
    const auto n = get_le<std::uint64_t>(in);
    std::string header(n, '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(n))) {
        throw Error("truncated header");
    }
    return header;
}

} // namespace reprompt::detail
