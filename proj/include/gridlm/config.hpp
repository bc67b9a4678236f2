#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gridlm/errors.hpp"

namespace gridlm {

/// Flat `section.key = value` run configuration. Unknown keys are rejected;
/// presets (model.preset, objective.preset, model.split) expand during
/// resolve(); the config hash covers the fully resolved canonical text, so
/// equal hashes mean equal effective configurations.
class RunConfig {
public:
    RunConfig();

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    bool is_set(const std::string& key) const; // explicitly set (not a default)

    int get_int(const std::string& key) const;
    int64_t get_i64(const std::string& key) const;
    double get_double(const std::string& key) const;

    /// Expands presets and validates cross-key constraints.
    void resolve();

    std::string canonical_text() const;
    uint64_t config_hash() const;
    std::string hash_hex_str() const;

    static const std::vector<std::pair<std::string, std::string>>& known_keys();

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, bool> explicit_;
    bool resolved_ = false;
};

} // namespace gridlm
