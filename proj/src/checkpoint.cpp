#include "gridlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "gridlm/errors.hpp"

namespace gridlm {

namespace {

// explicit little-endian encoding, independent of host byte order
void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t read_u32(const uint8_t*& p, const uint8_t* end) {
    if (end - p < 4) throw ConfigError("checkpoint: truncated file");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
}

uint64_t read_u64(const uint8_t*& p, const uint8_t* end) {
    if (end - p < 8) throw ConfigError("checkpoint: truncated file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    p += 8;
    return v;
}

} // namespace

void Checkpoint::add_f64(const std::string& name, const Tensor& t) {
    Entry e;
    e.name = name;
    e.dtype = 0;
    e.rows = t.rows;
    e.cols = t.cols;
    e.f = t;
    entries_.push_back(std::move(e));
}

void Checkpoint::add_i64(const std::string& name, const std::vector<int64_t>& v) {
    Entry e;
    e.name = name;
    e.dtype = 1;
    e.rows = 1;
    e.cols = static_cast<int>(v.size());
    e.i = v;
    entries_.push_back(std::move(e));
}

const Checkpoint::Entry& Checkpoint::find(const std::string& name) const {
    for (const Entry& e : entries_) {
        if (e.name == name) return e;
    }
    throw ConfigError("checkpoint: missing tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
    for (const Entry& e : entries_) {
        if (e.name == name) return true;
    }
    return false;
}

const Tensor& Checkpoint::get_f64(const std::string& name) const {
    const Entry& e = find(name);
    if (e.dtype != 0) throw ConfigError("checkpoint: '" + name + "' is not f64");
    return e.f;
}

const std::vector<int64_t>& Checkpoint::get_i64(const std::string& name) const {
    const Entry& e = find(name);
    if (e.dtype != 1) throw ConfigError("checkpoint: '" + name + "' is not i64");
    return e.i;
}

std::vector<std::string> Checkpoint::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const Entry& e : entries_) out.push_back(e.name);
    return out;
}

void Checkpoint::save(const std::string& path) const {
    std::string out;
    out.append(kMagic, 8);
    put_u64(out, config_hash);
    put_u64(out, static_cast<uint64_t>(step));
    put_u32(out, static_cast<uint32_t>(entries_.size()));
    for (const Entry& e : entries_) {
        put_u32(out, static_cast<uint32_t>(e.name.size()));
        out += e.name;
        out.push_back(static_cast<char>(e.dtype));
        put_u32(out, static_cast<uint32_t>(e.rows));
        put_u32(out, static_cast<uint32_t>(e.cols));
        if (e.dtype == 0) {
            for (double d : e.f.data) {
                uint64_t bits;
                std::memcpy(&bits, &d, 8);
                put_u64(out, bits);
            }
        } else {
            for (int64_t v : e.i) put_u64(out, static_cast<uint64_t>(v));
        }
    }
    // atomic replace so an interrupted save never clobbers the last good file
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("checkpoint: cannot write " + tmp);
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw ConfigError("checkpoint: write failed " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::string& path, uint64_t expected_hash, bool force) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const uint8_t* p = reinterpret_cast<const uint8_t*>(bytes.data());
    const uint8_t* end = p + bytes.size();
    if (bytes.size() < 8 || std::memcmp(p, kMagic, 8) != 0) {
        throw ConfigError("checkpoint: bad magic in " + path);
    }
    p += 8;
    Checkpoint ck;
    ck.config_hash = read_u64(p, end);
    ck.step = static_cast<int64_t>(read_u64(p, end));
    if (expected_hash != 0 && ck.config_hash != expected_hash && !force) {
        throw ConfigError("checkpoint: config hash mismatch (use --force to override)");
    }
    const uint32_t count = read_u32(p, end);
    for (uint32_t i = 0; i < count; ++i) {
        Entry e;
        const uint32_t name_len = read_u32(p, end);
        if (static_cast<size_t>(end - p) < name_len) throw ConfigError("checkpoint: truncated name");
        e.name.assign(reinterpret_cast<const char*>(p), name_len);
        p += name_len;
        if (end - p < 1) throw ConfigError("checkpoint: truncated dtype");
        e.dtype = *p++;
        e.rows = static_cast<int>(read_u32(p, end));
        e.cols = static_cast<int>(read_u32(p, end));
        const int64_t n = static_cast<int64_t>(e.rows) * e.cols;
        if (e.dtype == 0) {
            e.f.resize_to(e.rows, e.cols);
            for (int64_t j = 0; j < n; ++j) {
                const uint64_t bits = read_u64(p, end);
                std::memcpy(&e.f.data[static_cast<size_t>(j)], &bits, 8);
            }
        } else if (e.dtype == 1) {
            e.i.resize(static_cast<size_t>(n));
            for (int64_t j = 0; j < n; ++j) {
                e.i[static_cast<size_t>(j)] = static_cast<int64_t>(read_u64(p, end));
            }
        } else {
            throw ConfigError("checkpoint: unknown dtype tag");
        }
        ck.entries_.push_back(std::move(e));
    }
    return ck;
}

} // namespace gridlm
