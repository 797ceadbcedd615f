#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "driveby/common.hpp"
#include "driveby/rng.hpp"

namespace driveby::io {

static_assert(std::endian::native == std::endian::little,
              "archive formats are little-endian; big-endian hosts unsupported");

class BinWriter {
public:
    explicit BinWriter(const std::filesystem::path& path)
        : final_path_(path), tmp_path_(path.string() + ".tmp"), file_(tmp_path_, std::ios::binary),
          out_(&file_) {
        if (!file_) throw DataError("cannot open for writing: " + tmp_path_.string());
    }

    // external-stream mode, used to embed archives inside other archives;
    // commit() only flushes
    explicit BinWriter(std::ostream& os) : out_(&os), external_(true) {}

    ~BinWriter() {
        if (!external_ && !committed_) {
            file_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_path_, ec);
        }
    }

    void bytes(const void* p, std::size_t n) {
        out_->write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { bytes(&v, 2); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f32(float v) { bytes(&v, 4); }
    void f32s(const float* p, std::size_t n) { bytes(p, 4 * n); }
    void str(const std::string& s) {
        u16(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void magic(const char m[4]) { bytes(m, 4); }

    // write-to-temp then atomic rename; no partial files on error
    void commit() {
        out_->flush();
        if (!*out_) throw DataError("write failed: " + tmp_path_.string());
        if (external_) return;
        file_.close();
        std::filesystem::rename(tmp_path_, final_path_);
        committed_ = true;
    }

private:
    std::filesystem::path final_path_;
    std::filesystem::path tmp_path_;
    std::ofstream file_;
    std::ostream* out_;
    bool committed_ = false;
    bool external_ = false;
};

class BinReader {
public:
    explicit BinReader(const std::filesystem::path& path)
        : file_(path, std::ios::binary), in_(&file_), path_(path.string()) {
        if (!file_) throw DataError("cannot open: " + path_);
    }

    // external-stream mode for archives embedded inside other archives
    BinReader(std::istream& is, std::string label) : in_(&is), path_(std::move(label)) {}

    void bytes(void* p, std::size_t n) {
        in_->read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!*in_) throw DataError("truncated file: " + path_);
    }
    std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
    std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return v; }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
    float f32() { float v; bytes(&v, 4); return v; }
    void f32s(float* p, std::size_t n) { bytes(p, 4 * n); }
    std::string str() {
        std::string s(u16(), '\0');
        bytes(s.data(), s.size());
        return s;
    }
    void expect_magic(const char m[4], const char* what = "archive") {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, m, 4) != 0)
            throw DataError(std::string(what) + ": bad magic in " + path_);
    }
    void expect_version(std::uint16_t v, const char* what = "archive") {
        std::uint16_t got = u16();
        if (got != v)
            throw DataError(std::string(what) + ": format version " + std::to_string(got) +
                            ", expected " + std::to_string(v) + " in " + path_);
    }

private:
    std::ifstream file_;
    std::istream* in_;
    std::string path_;
};

inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot open for writing: " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path.string());
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

inline std::uint64_t fnv1a(const void* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace driveby::io
