#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cex/rng.hpp"

namespace oracle {

std::vector<double> naive_conv(const std::vector<double>& in, int in_c, int h, int w, const cex::LayerWeights& layer) {
    const int out_c = layer.shape[0], k = layer.shape[2], pad = k / 2;
    std::vector<double> out(static_cast<std::size_t>(out_c) * h * w, 0.0);
    for (int o = 0; o < out_c; ++o) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = layer.bias[o];
                for (int c = 0; c < in_c; ++c) {
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            const int yy = y + ky - pad, xx = x + kx - pad;
                            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                            s += layer.weights[((o * in_c + c) * k + ky) * k + kx] * in[(c * h + yy) * w + xx];
                        }
                    }
                }
                out[(o * h + y) * w + x] = s;
            }
        }
    }
    return out;
}

namespace {

std::vector<double> relu(std::vector<double> v) {
    for (auto& x : v) x = std::max(x, 0.0);
    return v;
}

std::vector<double> pool(const std::vector<double>& in, int c, int h, int w) {
    std::vector<double> out;
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y + 1 < h; y += 2) {
            for (int x = 0; x + 1 < w; x += 2) {
                double m = in[(ch * h + y) * w + x];
                m = std::max(m, in[(ch * h + y) * w + x + 1]);
                m = std::max(m, in[(ch * h + y + 1) * w + x]);
                m = std::max(m, in[(ch * h + y + 1) * w + x + 1]);
                out.push_back(m);
            }
        }
    }
    return out;
}

const cex::LayerWeights& find(const cex::ModelWeights& w, const std::string& name) {
    for (const auto& l : w.layers) {
        if (l.name == name) return l;
    }
    throw std::runtime_error("missing layer " + name);
}

}  // namespace

NetOutputs naive_forward(const cex::ModelWeights& w, const cex::InputTensor& x) {
    const int h = x.height, wd = x.width;
    std::vector<double> shifted = x.values;
    for (auto& v : shifted) v -= 0.5;
    NetOutputs o;
    const auto& c1 = find(w, "conv1");
    const auto& c2 = find(w, "conv2");
    const auto& d = find(w, "logits");
    o.conv1 = relu(naive_conv(shifted, 3, h, wd, c1));
    const auto p1 = pool(o.conv1, c1.shape[0], h, wd);
    o.conv2 = relu(naive_conv(p1, c1.shape[0], h / 2, wd / 2, c2));
    const auto p2 = pool(o.conv2, c2.shape[0], h / 2, wd / 2);
    const int plane = (h / 4) * (wd / 4);
    for (int c = 0; c < c2.shape[0]; ++c) {
        double s = 0.0;
        for (int i = 0; i < plane; ++i) s += p2[c * plane + i];
        o.embedding.push_back(s / plane);
    }
    for (int k = 0; k < d.shape[0]; ++k) {
        double s = d.bias[k];
        for (int j = 0; j < d.shape[1]; ++j) s += d.weights[k * d.shape[1] + j] * o.embedding[j];
        o.logits.push_back(s);
    }
    return o;
}

double central_difference(const cex::ClassifierModel& model, const cex::InputTensor& input, cex::Label cls,
                          const std::string& layer, std::size_t coordinate, double h) {
    auto act = model.forward(input, layer).values;
    const double base = act[coordinate];
    act[coordinate] = base + h;
    const double up = model.logits_from(layer, act)[cex::encode(cls)];
    act[coordinate] = base - h;
    const double down = model.logits_from(layer, act)[cex::encode(cls)];
    return (up - down) / (2.0 * h);
}

OneSided one_sided_difference(const cex::ClassifierModel& model, const cex::InputTensor& input, cex::Label cls,
                              const std::string& layer, std::size_t coordinate, double h) {
    auto act = model.forward(input, layer).values;
    const double base_value = act[coordinate];
    const double base = model.logits_from(layer, act)[cex::encode(cls)];
    act[coordinate] = base_value + h;
    const double up = model.logits_from(layer, act)[cex::encode(cls)];
    act[coordinate] = base_value - h;
    const double down = model.logits_from(layer, act)[cex::encode(cls)];
    return {(up - base) / h, (base - down) / h};
}

bool OneSided::smooth(double tol) const {
    return std::abs(forward - backward) <= tol * std::max({std::abs(forward), std::abs(backward), 1.0});
}

namespace {

double margin_of(const cex::ClassifierModel& model, const cex::ConceptProbe& probe, const cex::InputTensor& x) {
    const auto a = model.forward(x, probe.layer).values;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += probe.direction[i] * a[i];
    return s + probe.bias;
}

cex::InputTensor blur(const cex::InputTensor& in, double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k;
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k.push_back(std::exp(-(i * i) / (2.0 * sigma * sigma)));
        sum += k.back();
    }
    for (auto& v : k) v /= sum;
    cex::InputTensor a = in, b = in;
    for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < in.height; ++y) {
            for (int x = 0; x < in.width; ++x) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) {
                    acc += k[i + r] * (in.at(c, y, std::clamp(x + i, 0, in.width - 1)) - in.at(c, y, x));
                }
                a.at(c, y, x) = in.at(c, y, x) + acc;
            }
        }
        for (int y = 0; y < in.height; ++y) {
            for (int x = 0; x < in.width; ++x) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) {
                    acc += k[i + r] * (a.at(c, std::clamp(y + i, 0, in.height - 1), x) - a.at(c, y, x));
                }
                b.at(c, y, x) = a.at(c, y, x) + acc;
            }
        }
    }
    return b;
}

}  // namespace

std::vector<double> per_position_clm(const cex::ClassifierModel& model, const cex::ConceptProbe& probe,
                                     const cex::InputTensor& input, const cex::ClmConfig& cfg) {
    const int h = input.height, w = input.width, ws = cfg.window;
    const double base = margin_of(model, probe, input);
    const auto blurred = blur(input, cfg.blur_sigma);

    std::vector<double> m(static_cast<std::size_t>(ws) * ws);
    const double centre = (ws - 1) / 2.0;
    double peak = 0.0;
    for (int y = 0; y < ws; ++y) {
        for (int x = 0; x < ws; ++x) {
            const double dy = y - centre, dx = x - centre;
            m[y * ws + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * cfg.mask_sigma * cfg.mask_sigma));
            peak = std::max(peak, m[y * ws + x]);
        }
    }
    for (auto& v : m) v /= peak;

    std::vector<int> ps;
    for (int p = 0; p + ws <= h; p += cfg.stride) ps.push_back(p);
    if (ps.back() + ws < h) ps.push_back(h - ws);
    std::vector<int> qs;
    for (int q = 0; q + ws <= w; q += cfg.stride) qs.push_back(q);
    if (qs.back() + ws < w) qs.push_back(w - ws);

    // Every position from scratch.
    std::vector<std::vector<double>> delta(ps.size(), std::vector<double>(qs.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        for (std::size_t j = 0; j < qs.size(); ++j) {
            cex::InputTensor x = input;
            for (int c = 0; c < x.channels; ++c) {
                for (int dy = 0; dy < ws; ++dy) {
                    for (int dx = 0; dx < ws; ++dx) {
                        const int y = ps[i] + dy, xx = qs[j] + dx;
                        x.at(c, y, xx) = input.at(c, y, xx) + m[dy * ws + dx] * (blurred.at(c, y, xx) - input.at(c, y, xx));
                    }
                }
            }
            const double d = base - margin_of(model, probe, x);
            delta[i][j] = cfg.sign == cex::SignMode::positive_only ? std::max(d, 0.0) : d;
        }
    }

    std::vector<double> raw(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, wt = 0.0;
            for (std::size_t i = 0; i < ps.size(); ++i) {
                for (std::size_t j = 0; j < qs.size(); ++j) {
                    const int dy = y - ps[i], dx = x - qs[j];
                    if (dy < 0 || dy >= ws || dx < 0 || dx >= ws) continue;
                    acc += delta[i][j] * m[dy * ws + dx];
                    wt += m[dy * ws + dx];
                }
            }
            raw[y * w + x] = acc / std::max(wt, 1e-12);
        }
    }
    const double lo = *std::min_element(raw.begin(), raw.end());
    const double hi = *std::max_element(raw.begin(), raw.end());
    std::vector<double> out(raw.size(), 0.0);
    if (hi > lo) {
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) / (hi - lo);
    }
    return out;
}

double sorted_percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double rank = p / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (v[hi] - v[lo]) * (rank - static_cast<double>(lo));
}

cex::Mask percentile_mask(const std::vector<double>& values, int width, int height, double p) {
    cex::Mask m(width, height);
    if (std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; })) return m;
    const double t = sorted_percentile(values, p);
    for (std::size_t i = 0; i < values.size(); ++i) m.bits[i] = values[i] >= t;
    return m;
}

SweepResult threshold_sweep(const std::vector<double>& present, const std::vector<double>& absent, double min_tpr,
                            double max_fpr) {
    auto rate = [](const std::vector<double>& v, double t) {
        std::size_t n = 0;
        for (double p : v) n += p >= t;
        return v.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(v.size());
    };
    std::set<double> cand;
    for (double p : present) if (p > 0.5) cand.insert(p);
    for (double p : absent) if (p > 0.5) cand.insert(p);

    SweepResult r;
    bool have_mod = false, have_strong = false;
    for (double c : cand) {
        if (rate(present, c) >= min_tpr && (!have_mod || c > r.moderate)) {
            r.moderate = c;
            have_mod = true;
        }
        if (rate(absent, c) <= max_fpr && (!have_strong || c < r.strong)) {
            r.strong = c;
            have_strong = true;
        }
    }
    if (!have_mod) r.moderate = 0.5;
    if (!have_strong) {
        double mx = 0.5;
        for (double p : absent) mx = std::max(mx, p);
        r.strong = (mx + 1.0) / 2.0;
    }
    r.moderate = std::min(r.moderate, r.strong);
    return r;
}

double mann_whitney_auc(const std::vector<double>& s, const std::vector<int>& pos) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!pos[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (pos[j]) continue;
            pairs += 1.0;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

Eigen jacobi_eigen(std::vector<double> a, int n) {
    std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        }
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p], vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) { return a[x * n + x] > a[y * n + y]; });
    Eigen e;
    for (int i : order) {
        e.values.push_back(a[i * n + i]);
        std::vector<double> col(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) col[k] = v[k * n + i];
        e.vectors.push_back(col);
    }
    return e;
}

double Logistic::accuracy(const std::vector<std::vector<double>>& x, const std::vector<int>& y) const {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double z = b;
        for (std::size_t k = 0; k < w.size(); ++k) z += w[k] * x[i][k];
        ok += (z > 0) == (y[i] == 1);
    }
    return static_cast<double>(ok) / static_cast<double>(x.size());
}

Logistic batch_logistic(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int iterations,
                        double lr) {
    const std::size_t d = x.front().size();
    Logistic m;
    m.w.assign(d, 0.0);
    const double n = static_cast<double>(x.size());
    for (int it = 0; it < iterations; ++it) {
        std::vector<double> gw(d, 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double z = m.b;
            for (std::size_t k = 0; k < d; ++k) z += m.w[k] * x[i][k];
            const double err = 1.0 / (1.0 + std::exp(-z)) - y[i];
            for (std::size_t k = 0; k < d; ++k) gw[k] += err * x[i][k];
            gb += err;
        }
        for (std::size_t k = 0; k < d; ++k) m.w[k] -= lr * gw[k] / n;
        m.b -= lr * gb / n;
    }
    return m;
}

bool Expr::eval(const std::map<std::string, bool>& env) const {
    switch (kind) {
        case var: return env.at(name);
        case not_: return !kids[0].eval(env);
        case and_: return kids[0].eval(env) && kids[1].eval(env);
        case or_: return kids[0].eval(env) || kids[1].eval(env);
    }
    return false;
}

std::string Expr::text() const {
    switch (kind) {
        case var: return name;
        case not_: return "NOT (" + kids[0].text() + ")";
        case and_: return "(" + kids[0].text() + " AND " + kids[1].text() + ")";
        case or_: return "(" + kids[0].text() + " or " + kids[1].text() + ")";
    }
    return {};
}

namespace {
Expr grow(cex::Rng& rng, const std::vector<std::string>& names, int depth) {
    Expr e;
    const int pick = depth <= 0 ? 0 : rng.range(0, 3);
    if (pick == 0) {
        e.kind = Expr::var;
        e.name = names[rng.below(names.size())];
        return e;
    }
    e.kind = pick == 1 ? Expr::not_ : pick == 2 ? Expr::and_ : Expr::or_;
    e.kids.push_back(grow(rng, names, depth - 1));
    if (e.kind != Expr::not_) e.kids.push_back(grow(rng, names, depth - 1));
    return e;
}
}  // namespace

Expr random_expr(std::uint64_t seed, const std::vector<std::string>& names, int depth) {
    cex::Rng rng(seed);
    return grow(rng, names, depth);
}

}  // namespace oracle
