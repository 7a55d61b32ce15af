#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fdnn/tensor.hpp"

namespace fdnn {

// RGB image as a 3 x S x S tensor with values in [0,1]; clamped on
// construction. Immutable by convention after that.
class Image {
public:
    Image() = default;
    explicit Image(Tensor t);
    Image(std::size_t height, std::size_t width);

    const Tensor& tensor() const { return t_; }
    Tensor& tensor() { return t_; }
    std::size_t height() const { return t_.shape()[1]; }
    std::size_t width() const { return t_.shape()[2]; }

    double at(std::size_t ch, std::size_t y, std::size_t x) const {
        return t_[(ch * height() + y) * width() + x];
    }
    void set(std::size_t ch, std::size_t y, std::size_t x, double v);

private:
    Tensor t_;
};

// Binary PPM (P6, maxval 255). Byte v maps to v/255; save rounds x*255.
Image load_ppm(const std::filesystem::path& path);
void save_ppm(const Image& img, const std::filesystem::path& path);

enum class StyleKind { Identity, PosterEdge, HueWarp, Mosaic, InvertBlur, ContourBands };

// Deterministic parametric stylizer: same spec + same input -> identical
// output, always within [0,1].
struct StyleSpec {
    StyleKind kind = StyleKind::Identity;
    std::string name = "identity";
    bool seen = true;

    int levels = 4;               // PosterEdge: quantization levels (>= 2)
    double edge_threshold = 0.28;  // PosterEdge: gradient magnitude cutoff
    double hue_angle = 2.4;  // HueWarp: rotation around the gray axis, radians
    double warp_amp = 1.0;        // HueWarp: sinusoidal displacement, pixels
    double warp_freq = 3.0;       // HueWarp: displacement frequency
    int block = 3;                // Mosaic: block size (>= 1)
    int blur_radius = 2;          // InvertBlur: box blur radius (>= 0)
    int bands = 5;                // ContourBands: luminance bands (>= 2)

    void validate() const;
};

std::vector<StyleSpec> default_seen_styles();
std::vector<StyleSpec> default_unseen_styles();

// Geometry and palette of one procedural identity. Eye centers sit on the
// fixed row round(0.42*S) for every identity, so all faces are aligned.
struct FaceParams {
    std::size_t size = 0;
    std::size_t eye_row = 0;
    std::size_t eye_dx = 0;  // horizontal eye offset from center
    double head_rx = 0, head_ry = 0;
    double eye_r = 0, iris_r = 0, pupil_r = 0;
    double mouth_w = 0, mouth_h = 0;
    double mouth_row = 0;
    double hair_len = 0;
    double skin[3] = {0, 0, 0};
    double hair[3] = {0, 0, 0};
    double iris[3] = {0, 0, 0};
    double lips[3] = {0, 0, 0};
    double bg[3] = {0, 0, 0};
    double brow_drop = 0;
};

std::size_t face_eye_row(std::size_t size);
FaceParams face_params(std::uint64_t id_seed, std::size_t size);
Image render_face(const FaceParams& p);
Image gen_face(std::uint64_t id_seed, std::size_t size);

Image stylize(const Image& input, const StyleSpec& spec);

struct PairRecord {
    std::uint64_t id = 0;
    std::string style;
    bool seen = true;
    Image stylized;
    Image real;
};

struct PairDataset {
    std::vector<PairRecord> records;
    std::size_t image_size = 0;
};

// Train pairs use seen styles only; the test split covers seen + unseen
// styles over a disjoint identity range.
std::pair<PairDataset, PairDataset> make_dataset(std::size_t n_train_ids, std::size_t n_test_ids,
                                                 const std::vector<StyleSpec>& seen,
                                                 const std::vector<StyleSpec>& unseen,
                                                 std::size_t size, std::uint64_t seed);

// On-disk layout: PPM files plus one manifest JSON listing
// {id, style, split, sf_path, rf_path} records.
void write_dataset(const PairDataset& train, const PairDataset& test,
                   const std::filesystem::path& dir);
std::pair<PairDataset, PairDataset> load_dataset(const std::filesystem::path& manifest_path);

struct Batch {
    Tensor stylized;  // N x 3 x S x S
    Tensor real;      // N x 3 x S x S
    std::size_t count = 0;
};

// Seeded epoch batcher; a fixed (seed, epoch) yields one fixed permutation
// and batches partition the epoch, keeping the short final batch.
class Batcher {
public:
    Batcher(const PairDataset& dataset, std::size_t batch_size, std::uint64_t seed);

    void start_epoch(std::size_t epoch);
    std::optional<Batch> next();
    std::size_t batches_per_epoch() const;

private:
    const PairDataset* ds_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::vector<std::size_t> perm_;
    std::size_t pos_ = 0;
};

}  // namespace fdnn
