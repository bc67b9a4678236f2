#pragma once

#include <string>
#include <vector>

#include "gridlm/image.hpp"
#include "gridlm/tensor.hpp"

namespace gridlm {

enum class GridKind { kDiscrete, kContinuous };

/// H x W grid of token ids (discrete) or latent row vectors (continuous);
/// the modeling substrate consumed by the backbone.
struct TokenGrid {
    int height = 0;
    int width = 0;
    GridKind kind = GridKind::kDiscrete;
    std::vector<int32_t> ids; // discrete payload, row-major
    Tensor latents;           // continuous payload, (N, m)

    int cells() const { return height * width; }
    bool operator==(const TokenGrid& o) const {
        return height == o.height && width == o.width && kind == o.kind && ids == o.ids &&
               latents == o.latents;
    }
};

/// K-means patch codebook; entries are flattened patches in [0, 1].
struct Codebook {
    int patch_h = 0;
    int patch_w = 0;
    int channels = 1;
    Tensor entries; // (K, d), d = patch_h * patch_w * channels

    int k() const { return entries.rows; }
    int dim() const { return entries.cols; }
};

struct CodebookFitInfo {
    int requested_k = 0;
    int actual_k = 0;
    int iterations = 0;
    double quant_error = 0.0; // mean squared distance to the assigned centroid
    std::vector<std::string> warnings;
};

/// PCA patch autoencoder: encode = (x - mean) B^T, decode = z B + mean, with B
/// the top-m orthonormal principal components of the fitting corpus.
struct LinearAutoencoder {
    int patch_h = 0;
    int patch_w = 0;
    int channels = 1;
    Tensor mean;  // (1, d)
    Tensor basis; // (m, d)
    std::vector<double> eigenvalues; // all d covariance eigenvalues, descending

    int m() const { return basis.rows; }
    int dim() const { return basis.cols; }

    /// Mean reconstruction MSE implied by the discarded eigenvalue tail.
    double discarded_eigenvalue_sum() const {
        double s = 0.0;
        for (size_t i = static_cast<size_t>(m()); i < eigenvalues.size(); ++i) s += eigenvalues[i];
        return s;
    }
};

/// Either flavor of tokenizer behind one handle (checkpoint + CLI plumbing).
struct Tokenizer {
    GridKind kind = GridKind::kDiscrete;
    Codebook codebook;
    LinearAutoencoder autoencoder;

    int patch_h() const { return kind == GridKind::kDiscrete ? codebook.patch_h : autoencoder.patch_h; }
    int patch_w() const { return kind == GridKind::kDiscrete ? codebook.patch_w : autoencoder.patch_w; }
    int channels() const { return kind == GridKind::kDiscrete ? codebook.channels : autoencoder.channels; }

    TokenGrid encode(const Image& img) const;
    Image decode(const TokenGrid& grid) const;
};

/// Image cut into non-overlapping patches, one flattened patch per row,
/// row-major patch order. Extents must divide the image.
Tensor patchify(const Image& img, int patch_h, int patch_w);
Image unpatchify(const Tensor& patches, int image_h, int image_w, int patch_h, int patch_w,
                 int channels);

/// Lloyd's k-means with k-means++ seeding. Ties in assignment go to the lowest
/// centroid index; empty clusters are re-seeded from the farthest point. If
/// the corpus has fewer distinct rows than K the codebook shrinks (warning in
/// `info`).
Codebook fit_discrete_codebook(const Tensor& patches, int k, int patch_h, int patch_w,
                               int channels, uint64_t seed, CodebookFitInfo* info = nullptr,
                               int max_iterations = 64);

TokenGrid encode_discrete(const Image& img, const Codebook& cb);
Image decode_discrete(const TokenGrid& grid, const Codebook& cb);

/// The index of the nearest codebook entry by squared error (tie -> lowest).
int32_t nearest_entry(const Codebook& cb, const double* patch);

LinearAutoencoder fit_linear_autoencoder(const Tensor& patches, int m, int patch_h, int patch_w,
                                         int channels);

TokenGrid encode_continuous(const Image& img, const LinearAutoencoder& ae);
Image decode_continuous(const TokenGrid& grid, const LinearAutoencoder& ae);

struct ReconstructionReport {
    double mse_mean = 0.0;
    double mse_p50 = 0.0;
    double mse_p95 = 0.0;
    double psnr_mean = 0.0;
    int vocab_or_latent = 0; // K for discrete, m for continuous
    int patch_h = 0;
    int patch_w = 0;
    std::string kind;
    std::vector<std::string> warnings;
};

ReconstructionReport reconstruction_report(const std::vector<Image>& corpus, const Tokenizer& tok);

/// Symmetric eigendecomposition by cyclic Jacobi rotations; returns
/// eigenvalues (descending) and fills `vectors` rows with eigenvectors.
std::vector<double> symmetric_eigen(const Tensor& a, Tensor& vectors);

} // namespace gridlm
