#include "gridlm/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gridlm/data.hpp"

namespace gridlm {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

} // namespace

const std::vector<std::pair<std::string, std::string>>& RunConfig::known_keys() {
    static const std::vector<std::pair<std::string, std::string>> keys = {
        {"run.name", "run"},
        {"model.preset", ""},
        {"model.depth", "2"},
        {"model.hidden", "64"},
        {"model.ffn", "256"},
        {"model.heads", "4"},
        {"model.split", ""},
        {"head.kind", ""},
        {"head.depth", ""},
        {"head.law", "categorical"},
        {"diffusion.blocks", "3"},
        {"diffusion.width", "256"},
        {"diffusion.steps", "100"},
        {"objective.tag", "2d"},
        {"objective.preset", ""},
        {"objective.w", "0"},
        {"objective.n", "1"},
        {"tokenizer.kind", "none"},
        {"tokenizer.k", "16"},
        {"tokenizer.m", "4"},
        {"tokenizer.patch_h", "4"},
        {"tokenizer.patch_w", "4"},
        {"tokenizer.seed", "11"},
        {"data.source", "oracle"},
        {"data.train_count", "2048"},
        {"data.heldout_count", "256"},
        {"data.batch", "64"},
        {"data.image_dir", ""},
        {"data.image_h", "16"},
        {"data.image_w", "16"},
        {"data.classes", "3"},
        {"data.noise", "0"},
        {"data.snap", "2"},
        {"oracle.kind", "pairwise-markov"},
        {"oracle.h", "3"},
        {"oracle.w", "3"},
        {"oracle.v", "4"},
        {"oracle.eps", "0.1"},
        {"oracle.coupling", "1"},
        {"oracle.seed", "7"},
        {"opt.lr", "0.001"},
        {"opt.beta1", "0.9"},
        {"opt.beta2", "0.95"},
        {"opt.eps", "1e-8"},
        {"opt.weight_decay", "0"},
        {"opt.warmup", "100"},
        {"train.steps", "1000"},
        {"train.seed", "1"},
        {"train.checkpoint_every", "200"},
        {"train.eval_every", "0"},
        {"train.reduction_slices", "8"},
        {"sample.count", "16"},
        {"sample.temperature", "1.0"},
        {"sample.top_k", "0"},
        {"sample.policy", "uniform"},
        {"sample.diffusion_steps", "0"},
        {"eval.stub", "none"},
        {"eval.queries", "200"},
        {"eval.nll_examples", "200"},
        {"eval.samples", "0"},
        {"eval.order_sens", "50"},
        {"eval.seed", "1"},
        {"viz.cells", ""},
        {"ablate.axis_key", ""},
        {"ablate.axis_values", ""},
        {"ablate.seeds", "1"},
    };
    return keys;
}

RunConfig::RunConfig() {
    for (const auto& [k, v] : known_keys()) {
        values_[k] = v;
        explicit_[k] = false;
    }
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(line_no) + " is not key = value");
        }
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second = value;
    explicit_[key] = true;
    resolved_ = false;
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second;
}

bool RunConfig::is_set(const std::string& key) const {
    const auto it = explicit_.find(key);
    return it != explicit_.end() && it->second;
}

int RunConfig::get_int(const std::string& key) const {
    try {
        return std::stoi(get(key));
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: " + get(key));
    }
}

int64_t RunConfig::get_i64(const std::string& key) const {
    try {
        return std::stoll(get(key));
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: " + get(key));
    }
}

double RunConfig::get_double(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not a number: " + get(key));
    }
}

void RunConfig::resolve() {
    if (resolved_) return;

    // model.preset: causal transformer scales (desk tiny/small; paper configs
    // parse but are not desk-trainable)
    if (!get("model.preset").empty()) {
        const std::string p = get("model.preset");
        struct Scale {
            const char* name;
            int depth, hidden, ffn, heads;
        };
        static const Scale scales[] = {
            {"tiny", 2, 64, 256, 4},     {"small", 4, 128, 512, 4},
            {"base", 12, 768, 3072, 12}, {"large", 16, 1024, 4096, 16},
            {"huge", 20, 1280, 5120, 16},
        };
        bool found = false;
        for (const Scale& s : scales) {
            if (p == s.name) {
                if (!is_set("model.depth")) values_["model.depth"] = std::to_string(s.depth);
                if (!is_set("model.hidden")) values_["model.hidden"] = std::to_string(s.hidden);
                if (!is_set("model.ffn")) values_["model.ffn"] = std::to_string(s.ffn);
                if (!is_set("model.heads")) values_["model.heads"] = std::to_string(s.heads);
                found = true;
            }
        }
        if (!found) throw ConfigError("config: unknown model.preset '" + p + "'");
    }

    // model.split "A/B": backbone depth A, prediction head depth B
    if (!get("model.split").empty()) {
        const std::string s = get("model.split");
        const size_t slash = s.find('/');
        if (slash == std::string::npos) throw ConfigError("config: model.split must be A/B");
        values_["model.depth"] = trim(s.substr(0, slash));
        values_["head.depth"] = trim(s.substr(slash + 1));
        get_int("model.depth");
        get_int("head.depth");
    }

    // objective.preset "w<int|N>n<int>"
    if (!get("objective.preset").empty()) {
        const std::string p = get("objective.preset");
        if (p.size() < 4 || p[0] != 'w') throw ConfigError("config: objective.preset must look like wNn1");
        const size_t npos = p.find('n', 1);
        if (npos == std::string::npos) throw ConfigError("config: objective.preset must look like wNn1");
        const std::string ws = p.substr(1, npos - 1);
        const std::string ns = p.substr(npos + 1);
        values_["objective.w"] = (ws == "N") ? "0" : ws;
        values_["objective.n"] = ns;
        get_int("objective.w");
        get_int("objective.n");
        values_["objective.tag"] = "2d";
    }

    if (get("head.depth").empty()) values_["head.depth"] = get("model.depth");

    const std::string tag = get("objective.tag");
    if (tag != "2d" && tag != "1d_raster" && tag != "1d_random") {
        throw ConfigError("config: objective.tag must be 2d, 1d_raster, or 1d_random");
    }
    if (tag != "2d") {
        if (is_set("head.kind") && !get("head.kind").empty()) {
            throw ConfigError("config: head.kind does not apply to 1d objectives");
        }
        values_["head.kind"] = "linear1d";
    } else if (get("head.kind").empty()) {
        values_["head.kind"] = get_int("objective.w") == 0 ? "global" : "chunk";
    }
    const std::string hk = get("head.kind");
    if (hk != "global" && hk != "chunk" && hk != "linear1d") {
        throw ConfigError("config: head.kind must be global or chunk");
    }

    const std::string law = get("head.law");
    if (law != "categorical" && law != "diffusion") {
        throw ConfigError("config: head.law must be categorical or diffusion");
    }
    const std::string source = get("data.source");
    if (source != "oracle" && source != "images") {
        throw ConfigError("config: data.source must be oracle or images");
    }
    const std::string tok = get("tokenizer.kind");
    if (tok != "none" && tok != "discrete" && tok != "continuous") {
        throw ConfigError("config: tokenizer.kind must be none, discrete, or continuous");
    }
    // output-law exclusivity, rejected at load time
    if (source == "oracle") {
        if (law != "categorical") {
            throw ConfigError("config: oracle grids are discrete; head.law must be categorical");
        }
        if (tok != "none") throw ConfigError("config: oracle source takes no tokenizer");
    } else {
        if (tok == "none") throw ConfigError("config: image source needs a tokenizer");
        if (law == "categorical" && tok != "discrete") {
            throw ConfigError("config: categorical law requires the discrete tokenizer");
        }
        if (law == "diffusion" && tok != "continuous") {
            throw ConfigError("config: diffusion law requires the continuous tokenizer");
        }
    }
    resolved_ = true;
}

std::string RunConfig::canonical_text() const {
    std::string out;
    for (const auto& [k, v] : values_) { // std::map: already sorted by key
        out += k;
        out += "=";
        out += v;
        out += "\n";
    }
    return out;
}

uint64_t RunConfig::config_hash() const {
    const std::string text = canonical_text();
    return fnv1a64(text.data(), text.size());
}

std::string RunConfig::hash_hex_str() const { return hash_hex(config_hash()); }

} // namespace gridlm
