#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridlm/tensor.hpp"

namespace gridlm {

/// Versioned binary container: magic "GRIDLM01", config hash, step count, and
/// a named tensor table (f64 or i64 payloads, little-endian). save -> load ->
/// save is byte-identical; loading with a mismatched config hash fails unless
/// forced.
class Checkpoint {
public:
    static constexpr char kMagic[9] = "GRIDLM01";

    uint64_t config_hash = 0;
    int64_t step = 0;

    void add_f64(const std::string& name, const Tensor& t);
    void add_i64(const std::string& name, const std::vector<int64_t>& v);

    bool has(const std::string& name) const;
    const Tensor& get_f64(const std::string& name) const;
    const std::vector<int64_t>& get_i64(const std::string& name) const;

    std::vector<std::string> names() const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path, uint64_t expected_hash = 0,
                           bool force = false);

private:
    struct Entry {
        std::string name;
        uint8_t dtype = 0; // 0 = f64, 1 = i64
        int rows = 0;
        int cols = 0;
        Tensor f;
        std::vector<int64_t> i;
    };
    const Entry& find(const std::string& name) const;
    std::vector<Entry> entries_;
};

} // namespace gridlm
