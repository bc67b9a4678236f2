#include "gridlm/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace gridlm {

namespace fs = std::filesystem;

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const uint8_t*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

uint64_t grid_hash(const TokenGrid& grid) {
    uint64_t h = fnv1a64(&grid.height, sizeof(grid.height));
    h = fnv1a64(&grid.width, sizeof(grid.width), h);
    if (grid.kind == GridKind::kDiscrete) {
        h = fnv1a64(grid.ids.data(), grid.ids.size() * sizeof(int32_t), h);
    } else {
        h = fnv1a64(grid.latents.data.data(), grid.latents.data.size() * sizeof(double), h);
    }
    return h;
}

Corpus sample_corpus(const JointSpec& spec, int count, uint64_t seed, const std::string& split) {
    JointSampler sampler(spec);
    Rng root(seed);
    Corpus corpus;
    corpus.split = split;
    corpus.examples.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng ex = root.split(static_cast<uint64_t>(i));
        corpus.examples.push_back(Example{sampler.sample(ex), 0});
    }
    // provenance: spec shape plus seed
    std::ostringstream prov;
    prov << to_string(spec.kind) << ":" << spec.grid_h << "x" << spec.grid_w << ":v" << spec.vocab
         << ":seed" << seed;
    corpus.provenance = hash_hex(fnv1a64(prov.str().data(), prov.str().size()));
    return corpus;
}

namespace {

void draw_shape(Image& img, int kind, Rng& rng, int snap) {
    const int h = img.height, w = img.width;
    const double fg = 0.9, bg = 0.1;
    for (double& v : img.pix) v = bg;
    auto lattice = [&](int lo, int hi) { // snapped draw in [lo, hi]
        const int steps = (hi - lo) / snap + 1;
        return lo + snap * static_cast<int>(rng.below(static_cast<uint64_t>(steps)));
    };
    if (kind == 0) { // rectangle
        const int x0 = lattice(0, w / 2);
        const int y0 = lattice(0, h / 2);
        const int x1 = lattice(x0 + snap, w - 1);
        const int y1 = lattice(y0 + snap, h - 1);
        for (int r = y0; r <= std::min(y1, h - 1); ++r) {
            for (int c = x0; c <= std::min(x1, w - 1); ++c) img.at(r, c) = fg;
        }
    } else if (kind == 1) { // disk
        const int cx = lattice(w / 4, 3 * w / 4);
        const int cy = lattice(h / 4, 3 * h / 4);
        const int rad = lattice(snap, std::min(h, w) / 3);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const double dr = r - cy, dc = c - cx;
                if (dr * dr + dc * dc <= static_cast<double>(rad) * rad) img.at(r, c) = fg;
            }
        }
    } else { // stripes
        const int period = snap + snap * static_cast<int>(rng.below(3));
        const int phase = static_cast<int>(rng.below(static_cast<uint64_t>(period)));
        const bool vertical = rng.below(2) == 0;
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const int k = vertical ? c : r;
                if ((k + phase) % period < period / 2) img.at(r, c) = fg;
            }
        }
    }
}

} // namespace

void render_shape_corpus(const ShapeImageSpec& spec, int count, uint64_t seed,
                         const std::string& dir) {
    if (spec.kinds < 1 || spec.kinds > 3) throw ConfigError("shapes: kinds must be 1..3");
    fs::create_directories(dir);
    Rng root(seed);
    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw ConfigError("shapes: cannot write manifest in " + dir);
    for (int i = 0; i < count; ++i) {
        Rng ex = root.split(static_cast<uint64_t>(i));
        const int kind = i % spec.kinds; // balanced classes
        Image img(spec.image_h, spec.image_w, 1);
        draw_shape(img, kind, ex, spec.snap);
        if (spec.noise > 0.0) {
            for (double& v : img.pix) {
                v = std::clamp(v + spec.noise * ex.gaussian(), 0.0, 1.0);
            }
        }
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.pgm", i);
        write_pnm(img, (fs::path(dir) / name).string());
        manifest << name << " " << kind << "\n";
    }
}

std::vector<std::pair<Image, int>> load_image_corpus(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw ConfigError("corpus: missing manifest in " + dir);
    std::vector<std::pair<Image, int>> out;
    std::string name;
    int cls;
    while (manifest >> name >> cls) {
        out.emplace_back(read_pnm((fs::path(dir) / name).string()), cls);
    }
    if (out.empty()) throw ConfigError("corpus: empty manifest in " + dir);
    return out;
}

std::vector<std::vector<int>> make_batches(int corpus_size, int batch_size, uint64_t epoch_seed) {
    if (corpus_size < 1) throw ConfigError("batches: empty corpus");
    if (batch_size < 1 || batch_size > corpus_size) {
        throw ConfigError("batches: batch size outside [1, corpus size]");
    }
    std::vector<int> idx(static_cast<size_t>(corpus_size));
    for (int i = 0; i < corpus_size; ++i) idx[static_cast<size_t>(i)] = i;
    Rng rng(epoch_seed);
    rng.shuffle(idx);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < corpus_size; start += batch_size) {
        const int end = std::min(corpus_size, start + batch_size);
        batches.emplace_back(idx.begin() + start, idx.begin() + end);
    }
    return batches;
}

int split_overlap_count(const Corpus& train, const Corpus& heldout) {
    std::unordered_set<uint64_t> seen;
    for (const Example& e : train.examples) seen.insert(grid_hash(e.grid));
    int overlap = 0;
    for (const Example& e : heldout.examples) {
        if (seen.count(grid_hash(e.grid)) > 0) ++overlap;
    }
    return overlap;
}

void drop_split_overlap(const Corpus& train, Corpus& heldout) {
    std::unordered_set<uint64_t> seen;
    for (const Example& e : train.examples) seen.insert(grid_hash(e.grid));
    std::vector<Example> kept;
    for (Example& e : heldout.examples) {
        if (seen.count(grid_hash(e.grid)) == 0) kept.push_back(std::move(e));
    }
    heldout.examples = std::move(kept);
}

} // namespace gridlm
