#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gridlm/image.hpp"
#include "gridlm/objective.hpp"
#include "gridlm/oracle.hpp"

namespace gridlm {

struct Corpus {
    std::vector<Example> examples;
    std::string split;      // "train" or "heldout"
    std::string provenance; // content hash of the generating spec or image dir
};

/// i.i.d. grids from the joint; example i draws from stream split(seed, i), so
/// corpora are reproducible and per-example parallelizable.
Corpus sample_corpus(const JointSpec& spec, int count, uint64_t seed, const std::string& split);

/// Synthetic grayscale shape images: one shape kind per class id, geometry on
/// a coarse lattice, optional per-pixel noise.
struct ShapeImageSpec {
    int image_h = 16;
    int image_w = 16;
    int kinds = 3;      // 0 rectangle, 1 disk, 2 stripes; class id = kind
    double noise = 0.0; // gaussian sigma added per pixel, clamped to [0,1]
    int snap = 2;       // geometry lattice step in pixels
};

/// Writes `count` .pgm files plus a manifest of "filename class_id" lines.
void render_shape_corpus(const ShapeImageSpec& spec, int count, uint64_t seed,
                         const std::string& dir);

/// Reads a manifest-described image directory back as (image, class) pairs.
std::vector<std::pair<Image, int>> load_image_corpus(const std::string& dir);

/// Seeded epoch shuffle cut into batches; the final short batch is kept.
std::vector<std::vector<int>> make_batches(int corpus_size, int batch_size, uint64_t epoch_seed);

/// FNV-1a over the grid payload (split-disjointness checks, provenance).
uint64_t grid_hash(const TokenGrid& grid);

/// Number of held-out examples whose grid hash also appears in the train
/// split; image corpora enforce zero by dropping collisions.
int split_overlap_count(const Corpus& train, const Corpus& heldout);
void drop_split_overlap(const Corpus& train, Corpus& heldout);

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 1469598103934665603ULL);
std::string hash_hex(uint64_t h);

} // namespace gridlm
