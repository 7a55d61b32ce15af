#include "fdnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "fdnn/errors.hpp"

namespace fdnn {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same_size(const Image& a, const Image& b, const char* who) {
    if (a.height() != b.height() || a.width() != b.width())
        throw ShapeError(std::string(who) + ": image sizes disagree, " + std::to_string(a.width()) +
                         "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                         "x" + std::to_string(b.height()));
}

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kWindow);
    const double half = (kWindow - 1) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < kWindow; ++i) {
        const double d = static_cast<double>(i) - half;
        k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        total += k[i];
    }
    for (double& v : k) v /= total;
    return k;
}

std::vector<double> luminance_plane(const Image& img) {
    std::vector<double> lum(img.height() * img.width());
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            lum[y * img.width() + x] =
                0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
    return lum;
}

// separable valid-mode Gaussian filter; output is (h-10) x (w-10)
std::vector<double> gauss_valid(const std::vector<double>& in, std::size_t h, std::size_t w,
                                const std::vector<double>& k) {
    const std::size_t wv = w - kWindow + 1;
    std::vector<double> rows(h * wv);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < wv; ++x) {
            double acc = 0.0;
            for (std::size_t t = 0; t < kWindow; ++t) acc += k[t] * in[y * w + x + t];
            rows[y * wv + x] = acc;
        }
    const std::size_t hv = h - kWindow + 1;
    std::vector<double> out(hv * wv);
    for (std::size_t y = 0; y < hv; ++y)
        for (std::size_t x = 0; x < wv; ++x) {
            double acc = 0.0;
            for (std::size_t t = 0; t < kWindow; ++t) acc += k[t] * rows[(y + t) * wv + x];
            out[y * wv + x] = acc;
        }
    return out;
}

double binom_miss_ratio(std::size_t n, std::size_t m, std::size_t k) {
    // C(n-m, k) / C(n, k) without factorials
    if (k > n - m) return 0.0;
    double ratio = 1.0;
    for (std::size_t j = 0; j < k; ++j)
        ratio *= static_cast<double>(n - m - j) / static_cast<double>(n - j);
    return ratio;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    require_same_size(a, b, "psnr");
    const std::size_t n = a.tensor().size();
    double mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a.tensor()[i] - b.tensor()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(n);
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
    require_same_size(a, b, "ssim");
    const std::size_t h = a.height(), w = a.width();
    if (h < kWindow || w < kWindow)
        throw DomainError("ssim: image " + std::to_string(w) + "x" + std::to_string(h) +
                          " is smaller than the " + std::to_string(kWindow) + "x" +
                          std::to_string(kWindow) + " window");
    const auto k = gaussian_kernel();
    const auto la = luminance_plane(a);
    const auto lb = luminance_plane(b);
    std::vector<double> laa(la.size()), lbb(lb.size()), lab(la.size());
    for (std::size_t i = 0; i < la.size(); ++i) {
        laa[i] = la[i] * la[i];
        lbb[i] = lb[i] * lb[i];
        lab[i] = la[i] * lb[i];
    }
    const auto mu_a = gauss_valid(la, h, w, k);
    const auto mu_b = gauss_valid(lb, h, w, k);
    const auto e_aa = gauss_valid(laa, h, w, k);
    const auto e_bb = gauss_valid(lbb, h, w, k);
    const auto e_ab = gauss_valid(lab, h, w, k);

    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
        acc += num / den;
    }
    return acc / static_cast<double>(mu_a.size());
}

Tensor l2_normalized(const Tensor& v) {
    const double norm = std::sqrt(sum_sq(v));
    if (norm < 1e-30) return v;
    return scale(v, 1.0 / norm);
}

Tensor embed_fallback(const Image& img) {
    const std::size_t grid = 8;
    const std::size_t h = img.height(), w = img.width();
    Tensor out({grid * grid});
    for (std::size_t gy = 0; gy < grid; ++gy)
        for (std::size_t gx = 0; gx < grid; ++gx) {
            const std::size_t y0 = gy * h / grid, y1 = (gy + 1) * h / grid;
            const std::size_t x0 = gx * w / grid, x1 = (gx + 1) * w / grid;
            double acc = 0.0;
            double cnt = 0.0;
            for (std::size_t y = y0; y < std::max(y0 + 1, y1); ++y)
                for (std::size_t x = x0; x < std::max(x0 + 1, x1); ++x) {
                    acc += 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) +
                           0.114 * img.at(2, y, x);
                    cnt += 1.0;
                }
            out[gy * grid + gx] = acc / cnt;
        }
    return l2_normalized(out);
}

ConsistencyResult consistency_frr(const std::vector<GalleryItem>& queries,
                                  const std::vector<GalleryItem>& search, std::size_t k) {
    if (queries.empty() || search.empty()) throw DomainError("consistency_frr: empty gallery");
    const std::size_t n = search.size();
    const std::size_t kk = std::min(k, n);

    ConsistencyResult res;
    res.queries = queries.size();
    res.gallery = n;
    double chance_acc = 0.0;
    std::size_t hits = 0;

    std::vector<std::size_t> order(n);
    for (const auto& q : queries) {
        std::vector<double> sim(n);
        for (std::size_t i = 0; i < n; ++i) sim[i] = dot(q.embedding, search[i].embedding);
        std::iota(order.begin(), order.end(), 0);
        // ties break toward the lower gallery index
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
        bool hit = false;
        for (std::size_t t = 0; t < kk; ++t)
            if (search[order[t]].id == q.id) {
                hit = true;
                break;
            }
        if (hit) ++hits;
        std::size_t m = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (search[i].id == q.id) ++m;
        chance_acc += 1.0 - binom_miss_ratio(n, m, kk);
    }
    res.rate = static_cast<double>(hits) / static_cast<double>(queries.size());
    res.chance_exact = chance_acc / static_cast<double>(queries.size());
    res.chance_kn = static_cast<double>(kk) / static_cast<double>(n);
    return res;
}

MetricReport evaluate(const Destylizer& destylizer, const PairDataset& test) {
    if (test.records.empty()) throw DomainError("evaluate: empty test split");

    struct Acc {
        bool seen = true;
        std::size_t pairs = 0;
        double psnr_out = 0, ssim_out = 0, psnr_base = 0, ssim_base = 0;
    };
    std::map<std::string, Acc> by_style;
    for (const auto& rec : test.records) {
        const Image out = destylizer(rec.stylized);
        Acc& acc = by_style[rec.style];
        acc.seen = rec.seen;
        acc.pairs += 1;
        acc.psnr_out += psnr(out, rec.real);
        acc.ssim_out += ssim(out, rec.real);
        acc.psnr_base += psnr(rec.stylized, rec.real);
        acc.ssim_base += ssim(rec.stylized, rec.real);
    }

    MetricReport report;
    for (auto& [style, acc] : by_style) {
        const double n = static_cast<double>(acc.pairs);
        StyleMetrics sm;
        sm.style = style;
        sm.seen = acc.seen;
        sm.pairs = acc.pairs;
        sm.psnr_out = acc.psnr_out / n;
        sm.ssim_out = acc.ssim_out / n;
        sm.psnr_base = acc.psnr_base / n;
        sm.ssim_base = acc.ssim_base / n;
        report.styles.push_back(sm);

        GroupMetrics& g = acc.seen ? report.seen : report.unseen;
        g.pairs += acc.pairs;
        g.psnr_out += acc.psnr_out;
        g.ssim_out += acc.ssim_out;
        g.psnr_base += acc.psnr_base;
        g.ssim_base += acc.ssim_base;
    }
    for (GroupMetrics* g : {&report.seen, &report.unseen}) {
        if (g->pairs == 0) continue;
        const double n = static_cast<double>(g->pairs);
        g->psnr_out /= n;
        g->ssim_out /= n;
        g->psnr_base /= n;
        g->ssim_base /= n;
    }
    return report;
}

std::string report_table(const MetricReport& report) {
    std::ostringstream os;
    char line[160];
    os << "style           group   pairs  PSNR(out)  SSIM(out)  PSNR(in)  SSIM(in)\n";
    auto row = [&](const std::string& name, const std::string& group, std::size_t pairs,
                   double po, double so, double pb, double sb) {
        std::snprintf(line, sizeof line, "%-15s %-7s %5zu  %9.4f  %9.4f  %8.4f  %8.4f\n",
                      name.c_str(), group.c_str(), pairs, po, so, pb, sb);
        os << line;
    };
    for (const auto& s : report.styles)
        row(s.style, s.seen ? "seen" : "unseen", s.pairs, s.psnr_out, s.ssim_out, s.psnr_base,
            s.ssim_base);
    if (report.seen.pairs > 0)
        row("(all seen)", "seen", report.seen.pairs, report.seen.psnr_out, report.seen.ssim_out,
            report.seen.psnr_base, report.seen.ssim_base);
    if (report.unseen.pairs > 0)
        row("(all unseen)", "unseen", report.unseen.pairs, report.unseen.psnr_out,
            report.unseen.ssim_out, report.unseen.psnr_base, report.unseen.ssim_base);
    return os.str();
}

nlohmann::json report_json(const MetricReport& report) {
    nlohmann::json styles = nlohmann::json::array();
    for (const auto& s : report.styles)
        styles.push_back({{"style", s.style},
                          {"group", s.seen ? "seen" : "unseen"},
                          {"pairs", s.pairs},
                          {"psnr_out", s.psnr_out},
                          {"ssim_out", s.ssim_out},
                          {"psnr_base", s.psnr_base},
                          {"ssim_base", s.ssim_base}});
    auto group = [](const GroupMetrics& g) {
        return nlohmann::json{{"pairs", g.pairs},
                              {"psnr_out", g.psnr_out},
                              {"ssim_out", g.ssim_out},
                              {"psnr_base", g.psnr_base},
                              {"ssim_base", g.ssim_base}};
    };
    return nlohmann::json{
        {"styles", styles}, {"seen", group(report.seen)}, {"unseen", group(report.unseen)}};
}

ConsistencyReport consistency_protocol(const Destylizer& destylizer, const Embedder& embedder,
                                       const PairDataset& test, std::size_t k) {
    if (test.records.empty()) throw DomainError("consistency_protocol: empty test split");

    struct Entry {
        GalleryItem item;
        bool seen;
    };
    std::vector<Entry> gallery;
    gallery.reserve(test.records.size());
    for (const auto& rec : test.records) {
        const Image out = destylizer(rec.stylized);
        gallery.push_back({{embedder(out), rec.id, rec.style}, rec.seen});
    }

    std::map<std::string, bool> styles;
    for (const auto& e : gallery) styles[e.item.style] = e.seen;
    if (styles.size() < 2)
        throw DomainError("consistency_protocol: needs at least two styles in the test split");

    ConsistencyReport report;
    report.k = k;
    double seen_acc = 0, unseen_acc = 0;
    std::size_t seen_cnt = 0, unseen_cnt = 0;
    for (const auto& [style, seen] : styles) {
        std::vector<GalleryItem> queries, search;
        for (const auto& e : gallery)
            (e.item.style == style ? queries : search).push_back(e.item);
        StyleConsistency sc;
        sc.query_style = style;
        sc.seen = seen;
        sc.result = consistency_frr(queries, search, k);
        report.mean_chance_exact += sc.result.chance_exact;
        report.mean_chance_kn += sc.result.chance_kn;
        (seen ? seen_acc : unseen_acc) += sc.result.rate;
        (seen ? seen_cnt : unseen_cnt) += 1;
        report.styles.push_back(std::move(sc));
    }
    report.mean_chance_exact /= static_cast<double>(report.styles.size());
    report.mean_chance_kn /= static_cast<double>(report.styles.size());
    if (seen_cnt > 0) report.seen_rate = seen_acc / static_cast<double>(seen_cnt);
    if (unseen_cnt > 0) report.unseen_rate = unseen_acc / static_cast<double>(unseen_cnt);
    return report;
}

std::string consistency_table(const ConsistencyReport& report) {
    std::ostringstream os;
    char line[160];
    os << "query style     group   top-" << report.k << " rate  chance(exact)  chance(k/N)\n";
    for (const auto& s : report.styles) {
        std::snprintf(line, sizeof line, "%-15s %-7s %10.4f  %13.4f  %11.4f\n",
                      s.query_style.c_str(), s.seen ? "seen" : "unseen", s.result.rate,
                      s.result.chance_exact, s.result.chance_kn);
        os << line;
    }
    std::snprintf(line, sizeof line, "mean seen %.4f  mean unseen %.4f  chance %.4f\n",
                  report.seen_rate, report.unseen_rate, report.mean_chance_exact);
    os << line;
    return os.str();
}

nlohmann::json consistency_json(const ConsistencyReport& report) {
    nlohmann::json styles = nlohmann::json::array();
    for (const auto& s : report.styles)
        styles.push_back({{"query_style", s.query_style},
                          {"group", s.seen ? "seen" : "unseen"},
                          {"rate", s.result.rate},
                          {"chance_exact", s.result.chance_exact},
                          {"chance_kn", s.result.chance_kn},
                          {"queries", s.result.queries},
                          {"gallery", s.result.gallery}});
    return nlohmann::json{{"k", report.k},
                          {"styles", styles},
                          {"seen_rate", report.seen_rate},
                          {"unseen_rate", report.unseen_rate},
                          {"mean_chance_exact", report.mean_chance_exact},
                          {"mean_chance_kn", report.mean_chance_kn}};
}

}  // namespace fdnn
