#include "gridlm/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gridlm/errors.hpp"
#include "gridlm/rng.hpp"

namespace gridlm {

namespace {

double sq_dist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

void check_extents(const Image& img, int patch_h, int patch_w) {
    if (patch_h <= 0 || patch_w <= 0 || img.height % patch_h != 0 || img.width % patch_w != 0) {
        throw ConfigError("tokenizer: image extents not divisible by patch extents");
    }
}

} // namespace

Tensor patchify(const Image& img, int patch_h, int patch_w) {
    check_extents(img, patch_h, patch_w);
    const int gh = img.height / patch_h;
    const int gw = img.width / patch_w;
    const int d = patch_h * patch_w * img.channels;
    Tensor out(gh * gw, d);
    for (int pr = 0; pr < gh; ++pr) {
        for (int pc = 0; pc < gw; ++pc) {
            double* row = out.row(pr * gw + pc);
            int i = 0;
            for (int r = 0; r < patch_h; ++r) {
                for (int c = 0; c < patch_w; ++c) {
                    for (int ch = 0; ch < img.channels; ++ch) {
                        row[i++] = img.at(pr * patch_h + r, pc * patch_w + c, ch);
                    }
                }
            }
        }
    }
    return out;
}

Image unpatchify(const Tensor& patches, int image_h, int image_w, int patch_h, int patch_w,
                 int channels) {
    const int gh = image_h / patch_h;
    const int gw = image_w / patch_w;
    if (patches.rows != gh * gw || patches.cols != patch_h * patch_w * channels) {
        throw ConfigError("unpatchify: patch tensor shape mismatch");
    }
    Image img(image_h, image_w, channels);
    for (int pr = 0; pr < gh; ++pr) {
        for (int pc = 0; pc < gw; ++pc) {
            const double* row = patches.row(pr * gw + pc);
            int i = 0;
            for (int r = 0; r < patch_h; ++r) {
                for (int c = 0; c < patch_w; ++c) {
                    for (int ch = 0; ch < channels; ++ch) {
                        img.at(pr * patch_h + r, pc * patch_w + c, ch) = row[i++];
                    }
                }
            }
        }
    }
    return img;
}

int32_t nearest_entry(const Codebook& cb, const double* patch) {
    int32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cb.k(); ++k) {
        const double d = sq_dist(patch, cb.entries.row(k), cb.dim());
        if (d < best_d) { // strict: ties stay at the lowest index
            best_d = d;
            best = k;
        }
    }
    return best;
}

Codebook fit_discrete_codebook(const Tensor& patches, int k, int patch_h, int patch_w,
                               int channels, uint64_t seed, CodebookFitInfo* info,
                               int max_iterations) {
    if (k < 1) throw ConfigError("k-means: K must be >= 1");
    if (patches.rows < k) throw ConfigError("k-means: need at least K patches");
    const int d = patches.cols;
    const int p = patches.rows;

    CodebookFitInfo local;
    CodebookFitInfo& fit = info != nullptr ? *info : local;
    fit.requested_k = k;

    // Count distinct rows; K cannot exceed that.
    {
        std::vector<int> order(static_cast<size_t>(p));
        for (int i = 0; i < p; ++i) order[static_cast<size_t>(i)] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return std::lexicographical_compare(patches.row(a), patches.row(a) + d,
                                                patches.row(b), patches.row(b) + d);
        });
        int distinct = 1;
        for (int i = 1; i < p; ++i) {
            if (!std::equal(patches.row(order[static_cast<size_t>(i)]),
                            patches.row(order[static_cast<size_t>(i)]) + d,
                            patches.row(order[static_cast<size_t>(i - 1)]))) {
                ++distinct;
            }
        }
        if (distinct < k) {
            fit.warnings.push_back("k-means: only " + std::to_string(distinct) +
                                   " distinct patches; shrinking K from " + std::to_string(k));
            k = distinct;
        }
    }
    fit.actual_k = k;

    Rng rng(seed);
    Tensor centroids(k, d);

    // k-means++ seeding
    std::vector<double> min_d(static_cast<size_t>(p), std::numeric_limits<double>::infinity());
    {
        const int first = static_cast<int>(rng.below(static_cast<uint64_t>(p)));
        std::copy(patches.row(first), patches.row(first) + d, centroids.row(0));
        for (int c = 1; c < k; ++c) {
            double total = 0.0;
            for (int i = 0; i < p; ++i) {
                const double dd = sq_dist(patches.row(i), centroids.row(c - 1), d);
                if (dd < min_d[static_cast<size_t>(i)]) min_d[static_cast<size_t>(i)] = dd;
                total += min_d[static_cast<size_t>(i)];
            }
            int pick = 0;
            if (total > 0.0) {
                const double r = rng.uniform01() * total;
                double acc = 0.0;
                pick = p - 1;
                for (int i = 0; i < p; ++i) {
                    acc += min_d[static_cast<size_t>(i)];
                    if (r < acc) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = static_cast<int>(rng.below(static_cast<uint64_t>(p)));
            }
            std::copy(patches.row(pick), patches.row(pick) + d, centroids.row(c));
        }
    }

    std::vector<int32_t> assign(static_cast<size_t>(p), 0);
    std::vector<int> counts(static_cast<size_t>(k), 0);
    Tensor sums(k, d);
    Codebook probe;
    probe.patch_h = patch_h;
    probe.patch_w = patch_w;
    probe.channels = channels;

    int iter = 0;
    for (; iter < max_iterations; ++iter) {
        probe.entries = centroids;
        bool changed = false;
        for (int i = 0; i < p; ++i) {
            const int32_t a = nearest_entry(probe, patches.row(i));
            if (a != assign[static_cast<size_t>(i)]) changed = true;
            assign[static_cast<size_t>(i)] = a;
        }
        if (!changed && iter > 0) break;

        sums.fill(0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < p; ++i) {
            const int a = assign[static_cast<size_t>(i)];
            ++counts[static_cast<size_t>(a)];
            double* srow = sums.row(a);
            const double* prow = patches.row(i);
            for (int j = 0; j < d; ++j) srow[j] += prow[j];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) {
                // Re-seed an empty cluster from the farthest point.
                int far = 0;
                double far_d = -1.0;
                for (int i = 0; i < p; ++i) {
                    const double dd =
                        sq_dist(patches.row(i), centroids.row(assign[static_cast<size_t>(i)]), d);
                    if (dd > far_d) {
                        far_d = dd;
                        far = i;
                    }
                }
                std::copy(patches.row(far), patches.row(far) + d, centroids.row(c));
                assign[static_cast<size_t>(far)] = c;
            } else {
                const double inv = 1.0 / counts[static_cast<size_t>(c)];
                double* crow = centroids.row(c);
                const double* srow = sums.row(c);
                for (int j = 0; j < d; ++j) crow[j] = srow[j] * inv;
            }
        }
    }
    fit.iterations = iter;

    Codebook cb;
    cb.patch_h = patch_h;
    cb.patch_w = patch_w;
    cb.channels = channels;
    cb.entries = std::move(centroids);

    double err = 0.0;
    for (int i = 0; i < p; ++i) {
        err += sq_dist(patches.row(i), cb.entries.row(nearest_entry(cb, patches.row(i))), d);
    }
    fit.quant_error = err / p;
    return cb;
}

TokenGrid encode_discrete(const Image& img, const Codebook& cb) {
    check_extents(img, cb.patch_h, cb.patch_w);
    if (img.channels != cb.channels) throw ConfigError("encode: channel mismatch");
    const Tensor patches = patchify(img, cb.patch_h, cb.patch_w);
    TokenGrid grid;
    grid.kind = GridKind::kDiscrete;
    grid.height = img.height / cb.patch_h;
    grid.width = img.width / cb.patch_w;
    grid.ids.resize(static_cast<size_t>(patches.rows));
    for (int i = 0; i < patches.rows; ++i) {
        grid.ids[static_cast<size_t>(i)] = nearest_entry(cb, patches.row(i));
    }
    return grid;
}

Image decode_discrete(const TokenGrid& grid, const Codebook& cb) {
    if (grid.kind != GridKind::kDiscrete) throw ConfigError("decode_discrete: continuous grid");
    Tensor patches(grid.cells(), cb.dim());
    for (int i = 0; i < grid.cells(); ++i) {
        const int32_t id = grid.ids[static_cast<size_t>(i)];
        if (id < 0 || id >= cb.k()) throw ConfigError("decode: token id outside codebook");
        std::copy(cb.entries.row(id), cb.entries.row(id) + cb.dim(), patches.row(i));
    }
    return unpatchify(patches, grid.height * cb.patch_h, grid.width * cb.patch_w, cb.patch_h,
                      cb.patch_w, cb.channels);
}

std::vector<double> symmetric_eigen(const Tensor& a, Tensor& vectors) {
    const int n = a.rows;
    if (a.cols != n) throw ConfigError("symmetric_eigen: matrix must be square");
    Tensor m = a;
    vectors.resize_to(n, n);
    for (int i = 0; i < n; ++i) vectors.at(i, i) = 1.0;

    for (int sweep = 0; sweep < 128; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) off += m.at(p, q) * m.at(p, q);
        }
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (std::abs(apq) < 1e-30) continue;
                const double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double mip = m.at(i, p), miq = m.at(i, q);
                    m.at(i, p) = c * mip - s * miq;
                    m.at(i, q) = s * mip + c * miq;
                }
                for (int i = 0; i < n; ++i) {
                    const double mpi = m.at(p, i), mqi = m.at(q, i);
                    m.at(p, i) = c * mpi - s * mqi;
                    m.at(q, i) = s * mpi + c * mqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = vectors.at(i, p), viq = vectors.at(i, q);
                    vectors.at(i, p) = c * vip - s * viq;
                    vectors.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return m.at(x, x) > m.at(y, y); });

    std::vector<double> eig(static_cast<size_t>(n));
    Tensor sorted(n, n);
    for (int i = 0; i < n; ++i) {
        eig[static_cast<size_t>(i)] = m.at(order[static_cast<size_t>(i)], order[static_cast<size_t>(i)]);
        for (int r = 0; r < n; ++r) {
            sorted.at(i, r) = vectors.at(r, order[static_cast<size_t>(i)]);
        }
    }
    vectors = std::move(sorted); // rows = eigenvectors, descending eigenvalue
    return eig;
}

LinearAutoencoder fit_linear_autoencoder(const Tensor& patches, int m, int patch_h, int patch_w,
                                         int channels) {
    const int d = patches.cols;
    const int p = patches.rows;
    if (m < 1 || m > d) throw ConfigError("pca: latent width must be in [1, d]");
    if (p < 2) throw ConfigError("pca: need at least two patches");

    LinearAutoencoder ae;
    ae.patch_h = patch_h;
    ae.patch_w = patch_w;
    ae.channels = channels;
    ae.mean.resize_to(1, d);
    for (int i = 0; i < p; ++i) {
        const double* row = patches.row(i);
        for (int j = 0; j < d; ++j) ae.mean.data[static_cast<size_t>(j)] += row[j];
    }
    for (double& v : ae.mean.data) v /= p;

    Tensor cov(d, d);
    for (int i = 0; i < p; ++i) {
        const double* row = patches.row(i);
        for (int r = 0; r < d; ++r) {
            const double xr = row[r] - ae.mean.data[static_cast<size_t>(r)];
            double* crow = cov.row(r);
            for (int c = 0; c < d; ++c) {
                crow[c] += xr * (row[c] - ae.mean.data[static_cast<size_t>(c)]);
            }
        }
    }
    for (double& v : cov.data) v /= p;

    Tensor vectors;
    ae.eigenvalues = symmetric_eigen(cov, vectors);
    ae.basis.resize_to(m, d);
    std::copy(vectors.data.begin(), vectors.data.begin() + static_cast<size_t>(m) * d,
              ae.basis.data.begin());
    return ae;
}

TokenGrid encode_continuous(const Image& img, const LinearAutoencoder& ae) {
    check_extents(img, ae.patch_h, ae.patch_w);
    if (img.channels != ae.channels) throw ConfigError("encode: channel mismatch");
    const Tensor patches = patchify(img, ae.patch_h, ae.patch_w);
    TokenGrid grid;
    grid.kind = GridKind::kContinuous;
    grid.height = img.height / ae.patch_h;
    grid.width = img.width / ae.patch_w;
    grid.latents.resize_to(patches.rows, ae.m());
    for (int i = 0; i < patches.rows; ++i) {
        const double* x = patches.row(i);
        double* z = grid.latents.row(i);
        for (int r = 0; r < ae.m(); ++r) {
            const double* b = ae.basis.row(r);
            double acc = 0.0;
            for (int j = 0; j < ae.dim(); ++j) {
                acc += (x[j] - ae.mean.data[static_cast<size_t>(j)]) * b[j];
            }
            z[r] = acc;
        }
    }
    return grid;
}

Image decode_continuous(const TokenGrid& grid, const LinearAutoencoder& ae) {
    if (grid.kind != GridKind::kContinuous) throw ConfigError("decode_continuous: discrete grid");
    if (grid.latents.cols != ae.m()) throw ConfigError("decode: latent width mismatch");
    Tensor patches(grid.cells(), ae.dim());
    for (int i = 0; i < grid.cells(); ++i) {
        const double* z = grid.latents.row(i);
        double* x = patches.row(i);
        for (int j = 0; j < ae.dim(); ++j) x[j] = ae.mean.data[static_cast<size_t>(j)];
        for (int r = 0; r < ae.m(); ++r) {
            const double* b = ae.basis.row(r);
            for (int j = 0; j < ae.dim(); ++j) x[j] += z[r] * b[j];
        }
    }
    return unpatchify(patches, grid.height * ae.patch_h, grid.width * ae.patch_w, ae.patch_h,
                      ae.patch_w, ae.channels);
}

TokenGrid Tokenizer::encode(const Image& img) const {
    return kind == GridKind::kDiscrete ? encode_discrete(img, codebook)
                                       : encode_continuous(img, autoencoder);
}

Image Tokenizer::decode(const TokenGrid& grid) const {
    return kind == GridKind::kDiscrete ? decode_discrete(grid, codebook)
                                       : decode_continuous(grid, autoencoder);
}

ReconstructionReport reconstruction_report(const std::vector<Image>& corpus, const Tokenizer& tok) {
    if (corpus.empty()) throw ConfigError("reconstruction_report: empty corpus");
    ReconstructionReport rep;
    rep.kind = tok.kind == GridKind::kDiscrete ? "discrete" : "continuous";
    rep.vocab_or_latent = tok.kind == GridKind::kDiscrete ? tok.codebook.k() : tok.autoencoder.m();
    rep.patch_h = tok.patch_h();
    rep.patch_w = tok.patch_w();

    std::vector<double> errs;
    errs.reserve(corpus.size());
    double psnr_sum = 0.0;
    for (const Image& img : corpus) {
        const Image rec = tok.decode(tok.encode(img));
        double mse = 0.0;
        for (size_t i = 0; i < img.pix.size(); ++i) {
            const double d = img.pix[i] - rec.pix[i];
            mse += d * d;
        }
        mse /= static_cast<double>(img.pix.size());
        errs.push_back(mse);
        psnr_sum += 10.0 * std::log10(1.0 / std::max(mse, 1e-12));
    }
    double total = 0.0;
    for (double e : errs) total += e;
    rep.mse_mean = total / static_cast<double>(errs.size());
    rep.psnr_mean = psnr_sum / static_cast<double>(errs.size());
    std::sort(errs.begin(), errs.end());
    rep.mse_p50 = errs[errs.size() / 2];
    rep.mse_p95 = errs[static_cast<size_t>(0.95 * static_cast<double>(errs.size() - 1))];
    return rep;
}

} // namespace gridlm
