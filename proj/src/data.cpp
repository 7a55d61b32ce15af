#include "fdnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fdnn/errors.hpp"
#include "fdnn/rng.hpp"

namespace fdnn {

namespace {

double clamp01(double v) {
    if (!(v >= 0.0)) return 0.0;  // also maps NaN to 0
    return v > 1.0 ? 1.0 : v;
}

double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

// ------------------------------------------------------------------ Image

Image::Image(Tensor t) : t_(std::move(t)) {
    if (t_.rank() != 3 || t_.shape()[0] != 3)
        throw ShapeError("image: expected 3xHxW tensor, got " + shape_str(t_));
    for (std::size_t i = 0; i < t_.size(); ++i) t_[i] = clamp01(t_[i]);
}

Image::Image(std::size_t height, std::size_t width) : t_({3, height, width}) {}

void Image::set(std::size_t ch, std::size_t y, std::size_t x, double v) {
    t_[(ch * height() + y) * width() + x] = clamp01(v);
}

// -------------------------------------------------------------------- PPM

Image load_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw IoError("unsupported magic in " + path.string() + " (want P6)");
    std::size_t pos = 2;
    auto next_int = [&](const char* field) -> long {
        while (pos < bytes.size()) {
            const char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
            throw IoError("truncated header in " + path.string() + " while reading " + field);
        long v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])))
            v = v * 10 + (bytes[pos++] - '0');
        return v;
    };
    const long w = next_int("width");
    const long h = next_int("height");
    const long maxval = next_int("maxval");
    if (w <= 0 || h <= 0) throw IoError("bad dimensions in " + path.string());
    if (maxval != 255)
        throw IoError("unsupported maxval " + std::to_string(maxval) + " in " + path.string() +
                      " (want 255)");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw IoError("truncated header in " + path.string());
    ++pos;  // single whitespace byte before the payload

    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    if (bytes.size() - pos < need)
        throw IoError("truncated payload in " + path.string() + ": want " + std::to_string(need) +
                      " bytes, have " + std::to_string(bytes.size() - pos));

    Image img(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    for (std::size_t y = 0; y < static_cast<std::size_t>(h); ++y)
        for (std::size_t x = 0; x < static_cast<std::size_t>(w); ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const unsigned char b = static_cast<unsigned char>(bytes[pos++]);
                img.set(c, y, x, static_cast<double>(b) / 255.0);
            }
    return img;
}

void save_ppm(const Image& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
    std::string payload;
    payload.reserve(img.width() * img.height() * 3);
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const long b = std::lround(img.at(c, y, x) * 255.0);
                payload.push_back(static_cast<char>(std::clamp(b, 0L, 255L)));
            }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("short write to " + path.string());
}

// ------------------------------------------------------------------ faces

std::size_t face_eye_row(std::size_t size) {
    return static_cast<std::size_t>(std::lround(0.42 * static_cast<double>(size)));
}

FaceParams face_params(std::uint64_t id_seed, std::size_t size) {
    if (size < 16) throw ConfigError("face size must be >= 16, got " + std::to_string(size));
    Rng rng(derive_seed(id_seed, "face-params"));
    const double s = static_cast<double>(size);
    FaceParams p;
    p.size = size;
    p.eye_row = face_eye_row(size);
    p.eye_dx = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(s * rng.uniform(0.13, 0.19))));
    p.head_rx = s * rng.uniform(0.26, 0.34);
    p.head_ry = s * rng.uniform(0.33, 0.42);
    p.eye_r = s * rng.uniform(0.045, 0.075);
    p.iris_r = p.eye_r * rng.uniform(0.5, 0.7);
    p.pupil_r = p.iris_r * rng.uniform(0.4, 0.6);
    p.mouth_row = s * rng.uniform(0.68, 0.76);
    p.mouth_w = s * rng.uniform(0.10, 0.18);
    p.mouth_h = s * rng.uniform(0.02, 0.05);
    p.hair_len = s * rng.uniform(0.24, 0.34);
    p.brow_drop = s * rng.uniform(0.07, 0.10);

    p.skin[0] = rng.uniform(0.45, 0.95);
    p.skin[1] = p.skin[0] * rng.uniform(0.72, 0.88);
    p.skin[2] = p.skin[1] * rng.uniform(0.65, 0.90);
    const double hair_base = rng.uniform(0.05, 0.55);
    p.hair[0] = clamp01(hair_base * rng.uniform(0.7, 1.3));
    p.hair[1] = clamp01(hair_base * rng.uniform(0.5, 1.0));
    p.hair[2] = clamp01(hair_base * rng.uniform(0.3, 0.9));
    for (double& c : p.iris) c = rng.uniform(0.10, 0.85);
    p.lips[0] = rng.uniform(0.45, 0.85);
    p.lips[1] = rng.uniform(0.15, 0.40);
    p.lips[2] = rng.uniform(0.20, 0.45);
    for (double& c : p.bg) c = rng.uniform(0.55, 0.95);
    return p;
}

namespace {

void fill_ellipse(Image& img, double cy, double cx, double ry, double rx, const double rgb[3]) {
    if (ry <= 0 || rx <= 0) return;
    const std::size_t h = img.height(), w = img.width();
    const std::size_t y0 = static_cast<std::size_t>(std::max(0.0, std::floor(cy - ry)));
    const std::size_t y1 = std::min<std::size_t>(h, static_cast<std::size_t>(std::max(0.0, std::ceil(cy + ry) + 1)));
    const std::size_t x0 = static_cast<std::size_t>(std::max(0.0, std::floor(cx - rx)));
    const std::size_t x1 = std::min<std::size_t>(w, static_cast<std::size_t>(std::max(0.0, std::ceil(cx + rx) + 1)));
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) {
            const double dy = (static_cast<double>(y) - cy) / ry;
            const double dx = (static_cast<double>(x) - cx) / rx;
            if (dy * dy + dx * dx <= 1.0)
                for (std::size_t c = 0; c < 3; ++c) img.set(c, y, x, rgb[c]);
        }
}

}  // namespace

Image render_face(const FaceParams& p) {
    const std::size_t size = p.size;
    const double s = static_cast<double>(size);
    const double cx = s / 2.0;
    const double cy = s * 0.52;
    Image img(size, size);

    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
            for (std::size_t c = 0; c < 3; ++c) img.set(c, y, x, p.bg[c]);

    // hair as a larger ellipse behind the head
    fill_ellipse(img, cy - s * 0.04, cx, p.head_ry * 1.10, p.head_rx * 1.12, p.hair);
    fill_ellipse(img, cy, cx, p.head_ry, p.head_rx, p.skin);

    // fringe covering the forehead down to hair_len
    const double head_top = cy - p.head_ry;
    for (std::size_t y = 0; y < size; ++y) {
        const double fy = static_cast<double>(y);
        if (fy < head_top || fy > head_top + p.hair_len) continue;
        for (std::size_t x = 0; x < size; ++x) {
            const double dy = (fy - cy) / p.head_ry;
            const double dx = (static_cast<double>(x) - cx) / p.head_rx;
            if (dy * dy + dx * dx <= 1.0)
                for (std::size_t c = 0; c < 3; ++c) img.set(c, y, x, p.hair[c]);
        }
    }

    const double ey = static_cast<double>(p.eye_row);
    const double white[3] = {0.97, 0.97, 0.97};
    const double dark[3] = {0.05, 0.05, 0.07};
    for (int side = -1; side <= 1; side += 2) {
        const double ex = cx + side * static_cast<double>(p.eye_dx);
        fill_ellipse(img, ey, ex, p.eye_r * 0.62, p.eye_r, white);
        fill_ellipse(img, ey, ex, p.iris_r, p.iris_r, p.iris);
        fill_ellipse(img, ey, ex, p.pupil_r, p.pupil_r, dark);
        // brow above, clear of the eye row
        fill_ellipse(img, ey - p.brow_drop, ex, std::max(0.6, s * 0.012), p.eye_r, p.hair);
    }

    // nose: short vertical stroke of shaded skin
    const double shade[3] = {p.skin[0] * 0.82, p.skin[1] * 0.82, p.skin[2] * 0.82};
    fill_ellipse(img, ey + s * 0.13, cx, s * 0.055, std::max(0.6, s * 0.016), shade);

    fill_ellipse(img, p.mouth_row, cx, p.mouth_h, p.mouth_w, p.lips);
    return img;
}

Image gen_face(std::uint64_t id_seed, std::size_t size) {
    return render_face(face_params(id_seed, size));
}

// --------------------------------------------------------------- stylizers

void StyleSpec::validate() const {
    switch (kind) {
        case StyleKind::PosterEdge:
            if (levels < 2) throw ConfigError("posteredge: levels must be >= 2, got " + std::to_string(levels));
            break;
        case StyleKind::Mosaic:
            if (block < 1) throw ConfigError("mosaic: block must be >= 1, got " + std::to_string(block));
            break;
        case StyleKind::InvertBlur:
            if (blur_radius < 0) throw ConfigError("invertblur: radius must be >= 0");
            break;
        case StyleKind::ContourBands:
            if (bands < 2) throw ConfigError("contourbands: bands must be >= 2, got " + std::to_string(bands));
            break;
        default:
            break;
    }
}

namespace {

Image style_poster_edge(const Image& in, const StyleSpec& spec) {
    const std::size_t h = in.height(), w = in.width();
    const double q = static_cast<double>(spec.levels - 1);
    Image out(h, w);
    auto lum_at = [&](std::size_t y, std::size_t x) {
        return luminance(in.at(0, y, x), in.at(1, y, x), in.at(2, y, x));
    };
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t yl = y == 0 ? 0 : y - 1, yh = y + 1 >= h ? h - 1 : y + 1;
            const std::size_t xl = x == 0 ? 0 : x - 1, xh = x + 1 >= w ? w - 1 : x + 1;
            const double gy = (lum_at(yh, x) - lum_at(yl, x)) * 0.5;
            const double gx = (lum_at(y, xh) - lum_at(y, xl)) * 0.5;
            const bool edge = std::sqrt(gx * gx + gy * gy) > spec.edge_threshold;
            for (std::size_t c = 0; c < 3; ++c) {
                const double quant = std::round(in.at(c, y, x) * q) / q;
                out.set(c, y, x, edge ? quant * 0.15 : quant);
            }
        }
    return out;
}

Image style_hue_warp(const Image& in, const StyleSpec& spec) {
    const std::size_t h = in.height(), w = in.width();
    const double s = static_cast<double>(std::max(h, w));
    const double cosA = std::cos(spec.hue_angle), sinA = std::sin(spec.hue_angle);
    const double third = (1.0 - cosA) / 3.0;
    const double root = std::sqrt(1.0 / 3.0) * sinA;
    const double m[3][3] = {
        {cosA + third, third - root, third + root},
        {third + root, cosA + third, third - root},
        {third - root, third + root, cosA + third},
    };
    Image out(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double sx = static_cast<double>(x) +
                              spec.warp_amp * std::sin(kTwoPi * spec.warp_freq * static_cast<double>(y) / s);
            const double sy = static_cast<double>(y) +
                              spec.warp_amp * std::cos(kTwoPi * spec.warp_freq * static_cast<double>(x) / s);
            const std::size_t ix = static_cast<std::size_t>(
                std::clamp<long>(std::lround(sx), 0, static_cast<long>(w) - 1));
            const std::size_t iy = static_cast<std::size_t>(
                std::clamp<long>(std::lround(sy), 0, static_cast<long>(h) - 1));
            const double rgb[3] = {in.at(0, iy, ix), in.at(1, iy, ix), in.at(2, iy, ix)};
            for (std::size_t c = 0; c < 3; ++c)
                out.set(c, y, x, m[c][0] * rgb[0] + m[c][1] * rgb[1] + m[c][2] * rgb[2]);
        }
    return out;
}

Image style_mosaic(const Image& in, const StyleSpec& spec) {
    const std::size_t h = in.height(), w = in.width();
    const std::size_t b = static_cast<std::size_t>(spec.block);
    Image out(h, w);
    for (std::size_t by = 0; by < h; by += b)
        for (std::size_t bx = 0; bx < w; bx += b) {
            const std::size_t ye = std::min(h, by + b), xe = std::min(w, bx + b);
            double mean[3] = {0, 0, 0};
            const double cnt = static_cast<double>((ye - by) * (xe - bx));
            for (std::size_t y = by; y < ye; ++y)
                for (std::size_t x = bx; x < xe; ++x)
                    for (std::size_t c = 0; c < 3; ++c) mean[c] += in.at(c, y, x);
            for (double& c : mean) c /= cnt;
            for (std::size_t y = by; y < ye; ++y)
                for (std::size_t x = bx; x < xe; ++x) {
                    const bool grid = (y % b == 0) || (x % b == 0);
                    for (std::size_t c = 0; c < 3; ++c)
                        out.set(c, y, x, grid ? mean[c] * 0.55 : mean[c]);
                }
        }
    return out;
}

Image style_invert_blur(const Image& in, const StyleSpec& spec) {
    const std::size_t h = in.height(), w = in.width();
    const long r = spec.blur_radius;
    Image out(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc[3] = {0, 0, 0};
            double cnt = 0;
            for (long dy = -r; dy <= r; ++dy) {
                const long yy = static_cast<long>(y) + dy;
                if (yy < 0 || yy >= static_cast<long>(h)) continue;
                for (long dx = -r; dx <= r; ++dx) {
                    const long xx = static_cast<long>(x) + dx;
                    if (xx < 0 || xx >= static_cast<long>(w)) continue;
                    cnt += 1.0;
                    for (std::size_t c = 0; c < 3; ++c)
                        acc[c] += 1.0 - in.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                }
            }
            for (std::size_t c = 0; c < 3; ++c) out.set(c, y, x, acc[c] / cnt);
        }
    return out;
}

// fixed palette over luminance bands, via HSV with hue spread across bands
Image style_contour_bands(const Image& in, const StyleSpec& spec) {
    const std::size_t h = in.height(), w = in.width();
    const int n = spec.bands;
    Image out(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double lum = luminance(in.at(0, y, x), in.at(1, y, x), in.at(2, y, x));
            const int band = std::min(n - 1, static_cast<int>(lum * n));
            // hue drifts over a third of the wheel so neighboring luminance
            // bands keep neighboring colors; value carries the band ordering
            const double hue = 1.0 + 2.0 * static_cast<double>(band) / static_cast<double>(n);
            const double v = 0.20 + 0.75 * (static_cast<double>(band) + 0.5) / static_cast<double>(n);
            const double sat = 0.8;
            const int sector = static_cast<int>(hue) % 6;
            const double f = hue - std::floor(hue);
            const double p = v * (1 - sat), qq = v * (1 - sat * f), t = v * (1 - sat * (1 - f));
            double rgb[3];
            switch (sector) {
                case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
                case 1: rgb[0] = qq; rgb[1] = v; rgb[2] = p; break;
                case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
                case 3: rgb[0] = p; rgb[1] = qq; rgb[2] = v; break;
                case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
                default: rgb[0] = v; rgb[1] = p; rgb[2] = qq; break;
            }
            for (std::size_t c = 0; c < 3; ++c) out.set(c, y, x, rgb[c]);
        }
    return out;
}

}  // namespace

Image stylize(const Image& input, const StyleSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case StyleKind::Identity: return input;
        case StyleKind::PosterEdge: return style_poster_edge(input, spec);
        case StyleKind::HueWarp: return style_hue_warp(input, spec);
        case StyleKind::Mosaic: return style_mosaic(input, spec);
        case StyleKind::InvertBlur: return style_invert_blur(input, spec);
        case StyleKind::ContourBands: return style_contour_bands(input, spec);
    }
    throw ConfigError("unknown style kind");
}

std::vector<StyleSpec> default_seen_styles() {
    StyleSpec poster;
    poster.kind = StyleKind::PosterEdge;
    poster.name = "posteredge";
    poster.seen = true;
    StyleSpec hue;
    hue.kind = StyleKind::HueWarp;
    hue.name = "huewarp";
    hue.seen = true;
    StyleSpec mosaic;
    mosaic.kind = StyleKind::Mosaic;
    mosaic.name = "mosaic";
    mosaic.seen = true;
    return {poster, hue, mosaic};
}

std::vector<StyleSpec> default_unseen_styles() {
    StyleSpec invert;
    invert.kind = StyleKind::InvertBlur;
    invert.name = "invertblur";
    invert.seen = false;
    StyleSpec contour;
    contour.kind = StyleKind::ContourBands;
    contour.name = "contourbands";
    contour.seen = false;
    contour.bands = 8;
    return {invert, contour};
}

// ---------------------------------------------------------------- dataset

std::pair<PairDataset, PairDataset> make_dataset(std::size_t n_train_ids, std::size_t n_test_ids,
                                                 const std::vector<StyleSpec>& seen,
                                                 const std::vector<StyleSpec>& unseen,
                                                 std::size_t size, std::uint64_t seed) {
    if (n_train_ids < 1 || n_test_ids < 1)
        throw ConfigError("id counts must be >= 1, got train " + std::to_string(n_train_ids) +
                          ", test " + std::to_string(n_test_ids));
    if (seen.empty() || unseen.empty()) throw ConfigError("style lists must be nonempty");
    for (const auto& spec : seen) spec.validate();
    for (const auto& spec : unseen) spec.validate();

    const std::uint64_t face_root = derive_seed(seed, "faces");
    auto build = [&](std::size_t lo, std::size_t hi, bool with_unseen) {
        PairDataset ds;
        ds.image_size = size;
        for (std::size_t id = lo; id < hi; ++id) {
            const Image real = gen_face(derive_seed(face_root, id), size);
            auto emit = [&](const StyleSpec& spec) {
                ds.records.push_back({id, spec.name, spec.seen, stylize(real, spec), real});
            };
            for (const auto& spec : seen) emit(spec);
            if (with_unseen)
                for (const auto& spec : unseen) emit(spec);
        }
        return ds;
    };
    PairDataset train = build(0, n_train_ids, false);
    PairDataset test = build(n_train_ids, n_train_ids + n_test_ids, true);
    return {std::move(train), std::move(test)};
}

namespace {

std::string id_filename(std::uint64_t id, const std::string& suffix) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(id));
    return std::string(buf) + "_" + suffix + ".ppm";
}

void check_disjoint_ids(const PairDataset& train, const PairDataset& test) {
    std::set<std::uint64_t> train_ids, test_ids;
    for (const auto& r : train.records) train_ids.insert(r.id);
    for (const auto& r : test.records) test_ids.insert(r.id);
    for (std::uint64_t id : test_ids)
        if (train_ids.count(id))
            throw ConfigError("identity " + std::to_string(id) + " appears in both train and test");
}

}  // namespace

void write_dataset(const PairDataset& train, const PairDataset& test,
                   const std::filesystem::path& dir) {
    check_disjoint_ids(train, test);
    std::error_code ec;
    std::filesystem::create_directories(dir / "train", ec);
    std::filesystem::create_directories(dir / "test", ec);
    if (ec) throw IoError("cannot create dataset directories under " + dir.string());

    nlohmann::json manifest;
    manifest["image_size"] = train.image_size;
    nlohmann::json styles = nlohmann::json::object();
    nlohmann::json records = nlohmann::json::array();

    auto emit_split = [&](const PairDataset& ds, const std::string& split) {
        std::set<std::uint64_t> written;
        for (const auto& r : ds.records) {
            styles[r.style] = r.seen ? "seen" : "unseen";
            const std::string sf_rel = split + "/" + id_filename(r.id, r.style);
            const std::string rf_rel = split + "/" + id_filename(r.id, "real");
            save_ppm(r.stylized, dir / sf_rel);
            if (written.insert(r.id).second) save_ppm(r.real, dir / rf_rel);
            records.push_back({{"id", r.id},
                               {"style", r.style},
                               {"split", split},
                               {"sf_path", sf_rel},
                               {"rf_path", rf_rel}});
        }
    };
    emit_split(train, "train");
    emit_split(test, "test");
    manifest["styles"] = styles;
    manifest["records"] = records;

    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

std::pair<PairDataset, PairDataset> load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + manifest_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    const std::filesystem::path base = manifest_path.parent_path();
    PairDataset train, test;
    const std::size_t size = manifest.at("image_size").get<std::size_t>();
    train.image_size = test.image_size = size;
    const auto& styles = manifest.at("styles");

    for (const auto& rec : manifest.at("records")) {
        PairRecord r;
        r.id = rec.at("id").get<std::uint64_t>();
        r.style = rec.at("style").get<std::string>();
        if (!styles.contains(r.style))
            throw ConfigError("manifest record references unknown style " + r.style);
        r.seen = styles.at(r.style).get<std::string>() == "seen";
        r.stylized = load_ppm(base / rec.at("sf_path").get<std::string>());
        r.real = load_ppm(base / rec.at("rf_path").get<std::string>());
        if (r.stylized.height() != size || r.stylized.width() != size ||
            r.real.height() != size || r.real.width() != size)
            throw ConfigError("image size mismatch for id " + std::to_string(r.id) +
                              ": manifest says " + std::to_string(size));
        const std::string split = rec.at("split").get<std::string>();
        if (split == "train")
            train.records.push_back(std::move(r));
        else if (split == "test")
            test.records.push_back(std::move(r));
        else
            throw ConfigError("unknown split '" + split + "' in manifest");
    }
    check_disjoint_ids(train, test);
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------- Batcher

Batcher::Batcher(const PairDataset& dataset, std::size_t batch_size, std::uint64_t seed)
    : ds_(&dataset), batch_size_(batch_size), seed_(seed) {
    if (batch_size_ < 1) throw ConfigError("batch size must be >= 1");
    start_epoch(0);
}

void Batcher::start_epoch(std::size_t epoch) {
    const std::size_t n = ds_->records.size();
    perm_.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
    Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(perm_[i - 1], perm_[rng.index(i)]);
    pos_ = 0;
}

std::optional<Batch> Batcher::next() {
    const std::size_t n = perm_.size();
    if (pos_ >= n) return std::nullopt;
    const std::size_t take = std::min(batch_size_, n - pos_);
    const std::size_t s = ds_->image_size;
    const std::size_t plane = 3 * s * s;
    Batch batch;
    batch.count = take;
    batch.stylized = Tensor({take, 3, s, s});
    batch.real = Tensor({take, 3, s, s});
    for (std::size_t i = 0; i < take; ++i) {
        const PairRecord& r = ds_->records[perm_[pos_ + i]];
        std::copy(r.stylized.tensor().data(), r.stylized.tensor().data() + plane,
                  batch.stylized.data() + i * plane);
        std::copy(r.real.tensor().data(), r.real.tensor().data() + plane,
                  batch.real.data() + i * plane);
    }
    pos_ += take;
    return batch;
}

std::size_t Batcher::batches_per_epoch() const {
    return (ds_->records.size() + batch_size_ - 1) / batch_size_;
}

}  // namespace fdnn
