#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdnn/data.hpp"
#include "fdnn/tensor.hpp"

namespace fdnn {

// 10*log10(1/MSE) for [0,1] images; capped at 100 dB when MSE < 1e-10.
double psnr(const Image& a, const Image& b);

// Luminance SSIM with an 11x11 Gaussian window (sigma 1.5), C1=0.01^2,
// C2=0.03^2 at unit dynamic range, averaged over valid window positions.
double ssim(const Image& a, const Image& b);

Tensor l2_normalized(const Tensor& v);

// 8x8 grayscale downsample, L2-normalized; the embedding used when no
// trained encoder is available.
Tensor embed_fallback(const Image& img);

struct GalleryItem {
    Tensor embedding;
    std::uint64_t id = 0;
    std::string style;
};

struct ConsistencyResult {
    double rate = 0;          // fraction of queries with a same-identity hit in the top k
    double chance_exact = 0;  // hypergeometric closed form, averaged over queries
    double chance_kn = 0;     // the k/N approximation
    std::size_t queries = 0;
    std::size_t gallery = 0;
};

// Ranks the search gallery by cosine similarity for each query; ties break
// by gallery index. A query succeeds if any of the top k shares its id.
ConsistencyResult consistency_frr(const std::vector<GalleryItem>& queries,
                                  const std::vector<GalleryItem>& search, std::size_t k);

struct StyleMetrics {
    std::string style;
    bool seen = true;
    std::size_t pairs = 0;
    double psnr_out = 0;   // destylized vs ground truth
    double ssim_out = 0;
    double psnr_base = 0;  // stylized input vs ground truth
    double ssim_base = 0;
};

struct GroupMetrics {
    std::size_t pairs = 0;
    double psnr_out = 0;
    double ssim_out = 0;
    double psnr_base = 0;
    double ssim_base = 0;
};

struct MetricReport {
    std::vector<StyleMetrics> styles;
    GroupMetrics seen;
    GroupMetrics unseen;
};

using Destylizer = std::function<Image(const Image&)>;
using Embedder = std::function<Tensor(const Image&)>;

// Per-style mean PSNR/SSIM of destylizer(s) vs r, with the stylized-input
// baseline alongside, aggregated into seen/unseen groups weighted by pair
// counts.
MetricReport evaluate(const Destylizer& destylizer, const PairDataset& test);

std::string report_table(const MetricReport& report);
nlohmann::json report_json(const MetricReport& report);

struct StyleConsistency {
    std::string query_style;
    bool seen = true;
    ConsistencyResult result;
};

struct ConsistencyReport {
    std::vector<StyleConsistency> styles;
    double seen_rate = 0;
    double unseen_rate = 0;
    double mean_chance_exact = 0;
    double mean_chance_kn = 0;
    std::size_t k = 0;
};

// Retrieval protocol over a destylized gallery: for each style, its images
// act as queries against the destylized images of all other styles.
ConsistencyReport consistency_protocol(const Destylizer& destylizer, const Embedder& embedder,
                                       const PairDataset& test, std::size_t k);

std::string consistency_table(const ConsistencyReport& report);
nlohmann::json consistency_json(const ConsistencyReport& report);

}  // namespace fdnn
