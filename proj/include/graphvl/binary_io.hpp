#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include "graphvl/error.hpp"

namespace graphvl::detail {

template <typename T>
T to_little(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        v = to_little(v);
        const auto* p = reinterpret_cast<const unsigned char*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    void put_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        bytes_.insert(bytes_.end(), p, p + n);
    }
    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }
    const std::vector<unsigned char>& bytes() const { return bytes_; }

private:
    std::vector<unsigned char> bytes_;
};

/// Cursor over a byte buffer; every short read is reported as Truncated with
/// the offset at which the missing field begins.
class ByteReader {
public:
    ByteReader(std::vector<unsigned char> bytes, std::string module)
        : bytes_(std::move(bytes)), module_(std::move(module)) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw Error(ErrorCode::Truncated, module_,
                        std::string(what) + " at offset " + std::to_string(pos_) + " needs " + std::to_string(n) +
                            " bytes, " + std::to_string(remaining()) + " available");
        }
    }

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return to_little(v);
    }

    std::string get_bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::string get_string(const char* what) {
        const auto n = get<std::uint32_t>(what);
        return get_bytes(n, what);
    }

    void expect_end() const {
        if (remaining() != 0) {
            throw Error(ErrorCode::TrailingBytes, module_,
                        std::to_string(remaining()) + " unexpected bytes at offset " + std::to_string(pos_));
        }
    }

private:
    std::vector<unsigned char> bytes_;
    std::size_t pos_ = 0;
    std::string module_;
};

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path, const char* module) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileNotFound, module, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes,
                             const char* module) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Unwritable, module, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Unwritable, module, "write failed for " + path.string());
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text, const char* module) {
    write_file_bytes(path, std::vector<unsigned char>(text.begin(), text.end()), module);
}

} // namespace graphvl::detail
