#include "divsynth/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace divsynth {

namespace {

void require_same_dims(const SemanticLayout& a, const SemanticLayout& b, const char* what)
{
    if (a.width() != b.width() || a.height() != b.height()) {
        throw ShapeError(std::string(what) + ": " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                         " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
    }
}

std::string fmt(double v, int decimals)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width)
{
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string opt(const std::optional<double>& v, int decimals)
{
    return v ? fmt(*v, decimals) : std::string("-");
}

} // namespace

SemanticLayout oracle_segment(const ImageRGB& image, const std::vector<Rgb>& palette)
{
    if (palette.empty()) throw std::invalid_argument("oracle_segment: empty palette");
    std::vector<std::array<double, 3>> unit;
    for (const Rgb& c : palette) {
        const double n = std::sqrt(double(c[0]) * c[0] + double(c[1]) * c[1] + double(c[2]) * c[2]);
        if (n == 0.0) throw std::invalid_argument("oracle_segment: palette colour is black");
        unit.push_back({c[0] / n, c[1] / n, c[2] / n});
    }
    SemanticLayout out(image.width(), image.height(), palette.size());
    for (std::size_t y = 0; y < image.height(); ++y)
        for (std::size_t x = 0; x < image.width(); ++x) {
            const double r = image.at(0, y, x), g = image.at(1, y, x), b = image.at(2, y, x);
            const double n = std::sqrt(r * r + g * g + b * b);
            if (n == 0.0) continue; // black has no direction
            // smallest angle == largest cosine; strict comparison keeps the lower index on ties
            std::size_t best = 0;
            double best_cos = -2.0;
            for (std::size_t c = 0; c < unit.size(); ++c) {
                const double cs = (r * unit[c][0] + g * unit[c][1] + b * unit[c][2]) / n;
                if (cs > best_cos) {
                    best_cos = cs;
                    best = c;
                }
            }
            out.set(y, x, best);
        }
    return out;
}

double accuracy(const SemanticLayout& pred, const SemanticLayout& truth)
{
    require_same_dims(pred, truth, "accuracy");
    std::size_t hit = 0;
    const auto p = pred.pixels(), t = truth.pixels();
    for (std::size_t i = 0; i < p.size(); ++i) hit += p[i] == t[i];
    return static_cast<double>(hit) / static_cast<double>(p.size());
}

IoUResult iou(const SemanticLayout& pred, const SemanticLayout& truth)
{
    require_same_dims(pred, truth, "iou");
    if (pred.class_count() != truth.class_count()) throw std::invalid_argument("iou: class counts differ");
    const std::size_t k = truth.class_count();
    std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
    const auto p = pred.pixels(), t = truth.pixels();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == t[i]) {
            ++tp[t[i]];
        } else {
            ++fp[p[i]];
            ++fn[t[i]];
        }
    }
    IoUResult r;
    r.per_class.resize(k);
    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t denom = tp[c] + fp[c] + fn[c];
        if (denom == 0) continue;
        r.per_class[c] = static_cast<double>(tp[c]) / static_cast<double>(denom);
        if (tp[c] + fn[c] > 0) {
            r.mean += *r.per_class[c];
            ++present;
        }
    }
    if (present) r.mean /= static_cast<double>(present);
    return r;
}

double image_l1(const ImageRGB& a, const ImageRGB& b)
{
    if (a.width() != b.width() || a.height() != b.height()) throw ShapeError("image_l1: size mismatch");
    const auto va = a.values(), vb = b.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) acc += std::abs(double(va[i]) - double(vb[i]));
    return acc / static_cast<double>(va.size());
}

double mean_pairwise_l1(const std::vector<ImageRGB>& images)
{
    if (images.size() < 2) throw std::invalid_argument("pairwise distance needs at least two images");
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < images.size(); ++i)
        for (std::size_t j = i + 1; j < images.size(); ++j) {
            acc += image_l1(images[i], images[j]);
            ++pairs;
        }
    return acc / static_cast<double>(pairs);
}

double diversity_score(const Synthesizer& model, const SemanticLayout& layout, std::size_t samples, Rng& rng)
{
    if (samples < 2) throw std::invalid_argument("diversity_score needs K >= 2");
    std::vector<ImageRGB> outs;
    for (std::size_t k = 0; k < samples; ++k)
        outs.push_back(model.render(layout, NoiseVector::uniform(model.class_count(), rng)));
    return mean_pairwise_l1(outs);
}

std::vector<double> default_linkage_steps()
{
    return {-1.0, -0.5, 0.0, 0.5, 1.0};
}

double linkage_ratio(double inside, double outside)
{
    // nothing moved outside at all: fully linked, whatever the inside magnitude
    if (outside == 0.0 && inside > 0.0) return kLinkageCap;
    return std::min(inside / std::max(outside, kLinkageFloor), kLinkageCap);
}

double linkage_from_sweep(const std::vector<ImageRGB>& sweep, const SemanticLayout& layout, std::size_t cls)
{
    if (sweep.size() < 2) throw std::invalid_argument("linkage needs at least two sweep steps");
    if (cls >= layout.class_count() || !layout.contains(cls)) {
        throw std::invalid_argument("linkage: class " + std::to_string(cls) + " is absent from the layout");
    }
    const std::size_t h = layout.height(), w = layout.width();
    std::vector<double> delta(h * w, 0.0);
    for (std::size_t k = 1; k < sweep.size(); ++k) {
        if (sweep[k].width() != w || sweep[k].height() != h || sweep[0].width() != w || sweep[0].height() != h) {
            throw ShapeError("linkage: sweep image size does not match the layout");
        }
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double d = 0.0;
                for (std::size_t c = 0; c < 3; ++c) d += std::abs(double(sweep[k].at(c, y, x)) - sweep[k - 1].at(c, y, x));
                delta[y * w + x] += d / 3.0;
            }
    }
    double in = 0.0, out = 0.0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double d = delta[y * w + x] / static_cast<double>(sweep.size() - 1);
            if (layout.at(y, x) == cls) {
                in += d;
                ++n_in;
            } else {
                out += d;
                ++n_out;
            }
        }
    return linkage_ratio(in / static_cast<double>(n_in), n_out ? out / static_cast<double>(n_out) : 0.0);
}

double linkage_score(const Synthesizer& model, const SemanticLayout& layout, std::size_t cls,
                     const std::vector<double>& steps)
{
    if (steps.size() < 2) throw std::invalid_argument("linkage needs at least two sweep steps");
    if (cls >= layout.class_count() || !layout.contains(cls)) {
        throw std::invalid_argument("linkage: class " + std::to_string(cls) + " is absent from the layout");
    }
    std::vector<ImageRGB> sweep;
    for (double v : steps) {
        std::vector<double> n(model.class_count(), 0.0);
        n.at(cls) = v;
        sweep.push_back(model.render(layout, NoiseVector(std::move(n))));
    }
    return linkage_from_sweep(sweep, layout, cls);
}

RealityAccumulator::RealityAccumulator(std::vector<Rgb> palette)
    : palette_(std::move(palette)), class_sum_(palette_.size(), 0.0), class_count_(palette_.size(), 0)
{
}

void RealityAccumulator::add(const ImageRGB& image, const SemanticLayout& truth)
{
    if (truth.class_count() != palette_.size()) throw std::invalid_argument("reality: palette size != class count");
    const SemanticLayout pred = oracle_segment(image, palette_);
    accuracy_sum_ += divsynth::accuracy(pred, truth);
    const IoUResult r = iou(pred, truth);
    iou_sum_ += r.mean;
    for (std::size_t c = 0; c < palette_.size(); ++c) {
        if (r.per_class[c] && truth.contains(c)) {
            class_sum_[c] += *r.per_class[c];
            ++class_count_[c];
        }
    }
    ++images_;
}

double RealityAccumulator::accuracy() const
{
    return images_ ? accuracy_sum_ / static_cast<double>(images_) : 0.0;
}

double RealityAccumulator::mean_iou() const
{
    return images_ ? iou_sum_ / static_cast<double>(images_) : 0.0;
}

std::vector<std::optional<double>> RealityAccumulator::per_class_iou() const
{
    std::vector<std::optional<double>> out(palette_.size());
    for (std::size_t c = 0; c < palette_.size(); ++c)
        if (class_count_[c]) out[c] = class_sum_[c] / static_cast<double>(class_count_[c]);
    return out;
}

MetricsReport reality_report(const Synthesizer& model, const std::vector<const Sample*>& split,
                             const std::vector<Rgb>& palette, const EvalOptions& options, Rng& rng, std::string label)
{
    if (split.empty()) throw std::invalid_argument("reality_report: empty split");
    if (options.samples_per_layout == 0) throw std::invalid_argument("reality_report: need >= 1 sample per layout");
    const std::size_t classes = model.class_count();
    const std::size_t count = options.max_layouts ? std::min(options.max_layouts, split.size()) : split.size();

    MetricsReport rep;
    rep.label = std::move(label);
    rep.layouts = count;
    RealityAccumulator acc(palette);
    std::vector<double> link_sum(classes, 0.0);
    std::vector<std::size_t> link_n(classes, 0);
    for (std::size_t i = 0; i < count; ++i) {
        const SemanticLayout& layout = split[i]->layout;
        for (std::size_t s = 0; s < options.samples_per_layout; ++s)
            acc.add(model.render(layout, NoiseVector::uniform(classes, rng)), layout);
        rep.diversity += diversity_score(model, layout, options.diversity_samples, rng);
        for (std::size_t c : layout.present_classes()) {
            link_sum[c] += linkage_score(model, layout, c, options.linkage_steps);
            ++link_n[c];
        }
    }
    rep.images = acc.images();
    rep.accuracy = acc.accuracy();
    rep.mean_iou = acc.mean_iou();
    rep.per_class_iou = acc.per_class_iou();
    rep.diversity /= static_cast<double>(count);
    rep.linkage.resize(classes);
    std::size_t with_link = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        if (!link_n[c]) continue;
        rep.linkage[c] = link_sum[c] / static_cast<double>(link_n[c]);
        rep.mean_linkage += *rep.linkage[c];
        ++with_link;
    }
    if (with_link) rep.mean_linkage /= static_cast<double>(with_link);
    return rep;
}

std::string report_csv(const std::vector<MetricsReport>& reports, const std::vector<std::string>& class_names)
{
    std::string out = "model,layouts,images,accuracy,iou,diversity,mean_linkage";
    for (const auto& n : class_names) out += ",iou_" + n;
    for (const auto& n : class_names) out += ",linkage_" + n;
    out += "\n";
    for (const MetricsReport& r : reports) {
        out += r.label + "," + std::to_string(r.layouts) + "," + std::to_string(r.images) + "," + fmt(r.accuracy, 6) +
               "," + fmt(r.mean_iou, 6) + "," + fmt(r.diversity, 6) + "," + fmt(r.mean_linkage, 6);
        for (std::size_t c = 0; c < class_names.size(); ++c)
            out += "," + (c < r.per_class_iou.size() && r.per_class_iou[c] ? fmt(*r.per_class_iou[c], 6) : "");
        for (std::size_t c = 0; c < class_names.size(); ++c)
            out += "," + (c < r.linkage.size() && r.linkage[c] ? fmt(*r.linkage[c], 6) : "");
        out += "\n";
    }
    return out;
}

std::string report_table(const std::vector<MetricsReport>& reports, const std::vector<std::string>& class_names)
{
    std::string out = "# segmenter: palette-angle oracle (exact only for synthetic renders, not a learned network)\n";
    std::size_t w0 = 5;
    for (const auto& r : reports) w0 = std::max(w0, r.label.size());
    w0 += 2;
    out += pad("Model", w0) + pad("Accuracy", 10) + pad("IoU", 8) + pad("Diversity", 11) + "Linkage\n";
    for (const MetricsReport& r : reports) {
        out += pad(r.label, w0) + pad(fmt(r.accuracy, 3), 10) + pad(fmt(r.mean_iou, 3), 8) +
               pad(fmt(r.diversity, 4), 11) + fmt(r.mean_linkage, 2) + "\n";
    }
    out += "\nPer-class IoU / linkage\n";
    for (const MetricsReport& r : reports) {
        out += pad(r.label, w0);
        for (std::size_t c = 0; c < class_names.size(); ++c) {
            out += class_names[c] + " " + opt(c < r.per_class_iou.size() ? r.per_class_iou[c] : std::nullopt, 3) +
                   "/" + opt(c < r.linkage.size() ? r.linkage[c] : std::nullopt, 2) + "  ";
        }
        out += "\n";
    }
    return out;
}

} // namespace divsynth
