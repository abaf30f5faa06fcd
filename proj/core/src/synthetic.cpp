#include "cex/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <variant>

#include "cex/error.hpp"
#include "cex/image_io.hpp"
#include "cex/rng.hpp"

namespace cex {

// ---------------------------------------------------------------------------
// Rule grammar
//   or   := and ("OR" and)*
//   and  := not ("AND" not)*
//   not  := "NOT" not | atom
//   atom := name | "(" or ")"

struct Rule::Node {
    enum class Kind { name, op_not, op_and, op_or } kind;
    std::string name;
    std::shared_ptr<const Node> lhs, rhs;
};

namespace {

struct Token {
    enum class Kind { name, op_and, op_or, op_not, lparen, rparen, end } kind;
    std::string text;
    std::size_t pos;
};

std::vector<Token> tokenize(const std::string& s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '(') {
            out.push_back({Token::Kind::lparen, "(", i++});
        } else if (c == ')') {
            out.push_back({Token::Kind::rparen, ")", i++});
        } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = i;
            while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
            std::string word = s.substr(start, i - start);
            std::string upper = word;
            for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            if (upper == "AND") out.push_back({Token::Kind::op_and, word, start});
            else if (upper == "OR") out.push_back({Token::Kind::op_or, word, start});
            else if (upper == "NOT") out.push_back({Token::Kind::op_not, word, start});
            else out.push_back({Token::Kind::name, word, start});
        } else {
            fail(Errc::parse, "rule: unexpected character '" + std::string(1, c) + "' at position " + std::to_string(i));
        }
    }
    out.push_back({Token::Kind::end, "", s.size()});
    return out;
}

class RuleParser {
public:
    explicit RuleParser(const std::string& text) : tokens_(tokenize(text)) {}

    std::shared_ptr<const Rule::Node> parse(std::vector<std::string>& names) {
        names_ = &names;
        auto node = parse_or();
        if (peek().kind != Token::Kind::end) error("unexpected '" + peek().text + "'");
        return node;
    }

private:
    using NodePtr = std::shared_ptr<const Rule::Node>;
    using Kind = Rule::Node::Kind;

    const Token& peek() const { return tokens_[pos_]; }
    const Token& take() { return tokens_[pos_++]; }

    [[noreturn]] void error(const std::string& what) const {
        fail(Errc::parse, "rule: " + what + " at position " + std::to_string(peek().pos));
    }

    NodePtr parse_or() {
        NodePtr lhs = parse_and();
        while (peek().kind == Token::Kind::op_or) {
            take();
            lhs = std::make_shared<Rule::Node>(Rule::Node{Kind::op_or, {}, lhs, parse_and()});
        }
        return lhs;
    }

    NodePtr parse_and() {
        NodePtr lhs = parse_not();
        while (peek().kind == Token::Kind::op_and) {
            take();
            lhs = std::make_shared<Rule::Node>(Rule::Node{Kind::op_and, {}, lhs, parse_not()});
        }
        return lhs;
    }

    NodePtr parse_not() {
        if (peek().kind == Token::Kind::op_not) {
            take();
            return std::make_shared<Rule::Node>(Rule::Node{Kind::op_not, {}, parse_not(), nullptr});
        }
        return parse_atom();
    }

    NodePtr parse_atom() {
        const Token& t = peek();
        if (t.kind == Token::Kind::name) {
            take();
            if (std::find(names_->begin(), names_->end(), t.text) == names_->end()) names_->push_back(t.text);
            return std::make_shared<Rule::Node>(Rule::Node{Kind::name, t.text, nullptr, nullptr});
        }
        if (t.kind == Token::Kind::lparen) {
            take();
            NodePtr inner = parse_or();
            if (peek().kind != Token::Kind::rparen) error("expected ')'");
            take();
            return inner;
        }
        if (t.kind == Token::Kind::end) error("unexpected end of rule");
        error("unexpected '" + t.text + "'");
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    std::vector<std::string>* names_ = nullptr;
};

bool eval_node(const Rule::Node& n, const std::map<std::string, bool>& presence) {
    using Kind = Rule::Node::Kind;
    switch (n.kind) {
        case Kind::name: {
            auto it = presence.find(n.name);
            return it != presence.end() && it->second;
        }
        case Kind::op_not: return !eval_node(*n.lhs, presence);
        case Kind::op_and: return eval_node(*n.lhs, presence) && eval_node(*n.rhs, presence);
        case Kind::op_or: return eval_node(*n.lhs, presence) || eval_node(*n.rhs, presence);
    }
    return false;
}

}  // namespace

Rule Rule::parse(const std::string& text) {
    Rule r;
    r.text_ = text;
    r.root_ = RuleParser(text).parse(r.names_);
    return r;
}

bool Rule::evaluate(const std::map<std::string, bool>& presence) const { return eval_node(*root_, presence); }

Label evaluate_rule(const std::string& rule, const std::map<std::string, bool>& presence) {
    return Rule::parse(rule).classify(presence);
}

// ---------------------------------------------------------------------------
// Generator

double GeneratorConfig::probability(const std::string& concept_name) const {
    auto it = presence_probability.find(concept_name);
    return it == presence_probability.end() ? default_probability : it->second;
}

void GeneratorConfig::validate() const {
    if (samples <= 0) fail(Errc::validation, "generator: sample count must be positive");
    if (width < kMinImageSide || height < kMinImageSide) fail(Errc::validation, "generator: image must be at least 16x16");
    if (!(default_probability >= 0.0 && default_probability <= 1.0)) {
        fail(Errc::validation, "generator: probabilities must lie in [0, 1]");
    }
    for (const auto& [name, p] : presence_probability) {
        if (!registry.contains(name)) fail(Errc::validation, "generator: unknown concept '" + name + "'");
        if (!(p >= 0.0 && p <= 1.0)) fail(Errc::validation, "generator: probability for '" + name + "' outside [0, 1]");
    }
    for (const auto& n : nuisance) {
        if (!registry.contains(n)) fail(Errc::validation, "generator: unknown nuisance concept '" + n + "'");
    }
    const Rule r = Rule::parse(rule);
    for (const auto& name : r.names()) {
        if (!registry.contains(name)) fail(Errc::validation, "generator: rule references unknown concept '" + name + "'");
        if (std::find(nuisance.begin(), nuisance.end(), name) != nuisance.end()) {
            fail(Errc::validation, "generator: rule references nuisance concept '" + name + "'");
        }
    }
}

namespace {

struct Rgb {
    double r, g, b;
};

class Canvas {
public:
    Canvas(int w, int h) : w_(w), h_(h), data_(static_cast<std::size_t>(w) * h) {}

    int width() const { return w_; }
    int height() const { return h_; }
    Rgb& at(int x, int y) { return data_[static_cast<std::size_t>(y) * w_ + x]; }

    Image to_image() const {
        Image img(w_, h_);
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                const Rgb& p = data_[static_cast<std::size_t>(y) * w_ + x];
                img.at(x, y, 0) = to_byte(p.r);
                img.at(x, y, 1) = to_byte(p.g);
                img.at(x, y, 2) = to_byte(p.b);
            }
        }
        return img;
    }

private:
    static std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

    int w_, h_;
    std::vector<Rgb> data_;
};

// Smooth value noise: random lattice values, smoothstep-bilinear interpolation.
std::vector<double> value_noise(int w, int h, int cell, Rng& rng) {
    const int gw = w / cell + 2, gh = h / cell + 2;
    std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
    for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(w) * h);
    const auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
    for (int y = 0; y < h; ++y) {
        const double fy = static_cast<double>(y) / cell;
        const int iy = static_cast<int>(fy);
        const double ty = smooth(fy - iy);
        for (int x = 0; x < w; ++x) {
            const double fx = static_cast<double>(x) / cell;
            const int ix = static_cast<int>(fx);
            const double tx = smooth(fx - ix);
            const auto L = [&](int gx, int gy) { return lattice[static_cast<std::size_t>(gy) * gw + gx]; };
            const double top = L(ix, iy) * (1 - tx) + L(ix + 1, iy) * tx;
            const double bot = L(ix, iy + 1) * (1 - tx) + L(ix + 1, iy + 1) * tx;
            out[static_cast<std::size_t>(y) * w + x] = top * (1 - ty) + bot * ty;
        }
    }
    return out;
}

// Distance from point p to segment [a, b].
double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

struct Geometry {
    double cx, cy;      // lesion centre
    double scale;       // 1 at 32x32
};

// Paints shape pixels with colour `color` at opacity `alpha`; returns painted mask.
template <typename Inside>
Mask paint(Canvas& canvas, Inside inside, Rgb color, double alpha) {
    Mask m(canvas.width(), canvas.height());
    for (int y = 0; y < canvas.height(); ++y) {
        for (int x = 0; x < canvas.width(); ++x) {
            if (!inside(x + 0.5, y + 0.5)) continue;
            Rgb& p = canvas.at(x, y);
            p.r = (1 - alpha) * p.r + alpha * color.r;
            p.g = (1 - alpha) * p.g + alpha * color.g;
            p.b = (1 - alpha) * p.b + alpha * color.b;
            m.at(x, y) = 1;
        }
    }
    return m;
}

Mask draw_streaks(Canvas& c, const Geometry& g, double anchor_angle, Rng& rng) {
    const int lines = 7 + rng.range(0, 2);
    const double spread = (100.0 + rng.uniform(0.0, 20.0)) * std::numbers::pi / 180.0;
    const double r0 = 5.0 * g.scale, r1 = 12.0 * g.scale;
    const double half_width = 0.9 * g.scale;
    std::vector<std::array<double, 4>> segs;
    for (int i = 0; i < lines; ++i) {
        const double a = anchor_angle - spread / 2 + spread * (i + 0.5) / lines + rng.uniform(-0.05, 0.05);
        const double inner = r0 + rng.uniform(0.0, 1.5) * g.scale;
        segs.push_back({g.cx + inner * std::cos(a), g.cy + inner * std::sin(a), g.cx + r1 * std::cos(a),
                        g.cy + r1 * std::sin(a)});
    }
    return paint(c,
                 [&](double x, double y) {
                     for (const auto& s : segs) {
                         if (segment_distance(x, y, s[0], s[1], s[2], s[3]) <= half_width) return true;
                     }
                     return false;
                 },
                 Rgb{95, 20, 20}, 0.95);
}

Mask draw_dots(Canvas& c, const Geometry& g, double ax, double ay, Rng& rng) {
    const double region = 7.0 * g.scale;
    const double radius = 2.0 * g.scale;
    const double min_sep = 4.6 * g.scale;
    std::vector<std::pair<double, double>> centres;
    for (int attempt = 0; attempt < 400 && centres.size() < 12; ++attempt) {
        const double r = region * std::sqrt(rng.uniform());
        const double t = rng.uniform(0.0, 2 * std::numbers::pi);
        const double x = ax + r * std::cos(t), y = ay + r * std::sin(t);
        bool ok = true;
        for (const auto& [px, py] : centres) ok &= std::hypot(px - x, py - y) >= min_sep;
        if (ok) centres.emplace_back(x, y);
    }
    return paint(c,
                 [&](double x, double y) {
                     for (const auto& [px, py] : centres) {
                         if (std::hypot(x - px, y - py) <= radius) return true;
                     }
                     return false;
                 },
                 Rgb{25, 20, 20}, 1.0);
}

Mask draw_veil(Canvas& c, const Geometry& g, double ax, double ay, Rng& rng) {
    const double ra = (7.0 + rng.uniform(0.0, 1.0)) * g.scale;
    const double rb = (6.0 + rng.uniform(0.0, 1.0)) * g.scale;
    const double rot = rng.uniform(0.0, std::numbers::pi);
    const double cr = std::cos(rot), sr = std::sin(rot);
    return paint(c,
                 [&](double x, double y) {
                     const double dx = x - ax, dy = y - ay;
                     const double u = dx * cr + dy * sr, v = -dx * sr + dy * cr;
                     return (u * u) / (ra * ra) + (v * v) / (rb * rb) <= 1.0;
                 },
                 Rgb{95, 140, 215}, 0.75);
}

Mask draw_ruler(Canvas& c, Rng& rng) {
    const int side = rng.range(0, 3);
    const int w = c.width(), h = c.height();
    const int thickness = 2;
    const int offset = 1;
    return paint(c,
                 [&](double xf, double yf) {
                     const int x = static_cast<int>(xf), y = static_cast<int>(yf);
                     const bool tick_x = x % 4 == 0, tick_y = y % 4 == 0;
                     switch (side) {
                         case 0: return (y >= offset && y < offset + thickness) || (y == offset + thickness && tick_x);
                         case 1: return (y < h - offset && y >= h - offset - thickness) || (y == h - offset - thickness - 1 && tick_x);
                         case 2: return (x >= offset && x < offset + thickness) || (x == offset + thickness && tick_y);
                         default: return (x < w - offset && x >= w - offset - thickness) || (x == w - offset - thickness - 1 && tick_y);
                     }
                 },
                 Rgb{230, 200, 40}, 1.0);
}

void subtract(Mask& from, const Mask& painted_later) {
    for (std::size_t i = 0; i < from.bits.size(); ++i) {
        if (painted_later.bits[i]) from.bits[i] = 0;
    }
}

}  // namespace

ImageSample generate_sample(const GeneratorConfig& config, const Rule& rule, int index) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "syn_%05d", index);
    ImageSample s;
    s.id = idbuf;
    Rng rng(derive_seed(config.seed, s.id));

    std::map<std::string, bool> presence;
    for (const auto& c : config.registry.concepts()) presence[c.name] = rng.bernoulli(config.probability(c.name));

    const int w = config.width, h = config.height;
    Canvas canvas(w, h);
    const double scale = std::min(w, h) / 32.0;

    // Skin background.
    const Rgb skin{rng.uniform(205, 228), rng.uniform(150, 175), rng.uniform(120, 145)};
    const auto noise = value_noise(w, h, std::max(4, static_cast<int>(8 * scale)), rng);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double n = 10.0 * noise[static_cast<std::size_t>(y) * w + x] + rng.uniform(-3.0, 3.0);
            canvas.at(x, y) = {skin.r + n, skin.g + n, skin.b + n};
        }
    }

    // Lesion body.
    Geometry g{w / 2.0 + rng.uniform(-1.5, 1.5) * scale, h / 2.0 + rng.uniform(-1.5, 1.5) * scale, scale};
    const double la = rng.uniform(10.0, 12.5) * scale, lb = rng.uniform(9.0, 11.5) * scale;
    const double lrot = rng.uniform(0.0, std::numbers::pi);
    const Rgb lesion{rng.uniform(130, 155), rng.uniform(80, 100), rng.uniform(50, 68)};
    const double lc = std::cos(lrot), ls = std::sin(lrot);
    const auto in_lesion = [&](double x, double y) {
        const double dx = x - g.cx, dy = y - g.cy;
        const double u = dx * lc + dy * ls, v = -dx * ls + dy * lc;
        return (u * u) / (la * la) + (v * v) / (lb * lb) <= 1.0;
    };
    const Mask lesion_mask = paint(canvas, in_lesion, lesion, 0.9);
    int bx0 = w, by0 = h, bx1 = -1, by1 = -1;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!lesion_mask.at(x, y)) continue;
            bx0 = std::min(bx0, x), by0 = std::min(by0, y), bx1 = std::max(bx1, x), by1 = std::max(by1, y);
        }
    }

    // Concepts sit on distinct diagonals around the lesion centre.
    std::array<int, 4> quadrants{0, 1, 2, 3};
    rng.shuffle(quadrants.begin(), quadrants.end());
    const auto anchor_angle = [&](int q) { return (45.0 + 90.0 * q) * std::numbers::pi / 180.0 + rng.uniform(-0.25, 0.25); };
    const double anchor_r = 7.0 * scale;

    std::vector<std::pair<std::string, Mask>> painted;
    const auto record = [&](const std::string& name, Mask m) {
        for (auto& [_, earlier] : painted) subtract(earlier, m);
        painted.emplace_back(name, std::move(m));
    };
    int next_quadrant = 0;
    for (const auto& c : config.registry.concepts()) {
        if (!presence[c.name]) continue;
        if (c.name == "ruler_artifact") {
            record(c.name, draw_ruler(canvas, rng));
            continue;
        }
        const double a = anchor_angle(quadrants[static_cast<std::size_t>(next_quadrant++ % 4)]);
        const double ax = g.cx + anchor_r * std::cos(a), ay = g.cy + anchor_r * std::sin(a);
        if (c.name == "streaks") record(c.name, draw_streaks(canvas, g, a, rng));
        else if (c.name == "dots_globules") record(c.name, draw_dots(canvas, g, ax, ay, rng));
        else if (c.name == "blue_veil") record(c.name, draw_veil(canvas, g, ax, ay, rng));
        // Registry concepts without a renderer are never planted.
        else presence[c.name] = false;
    }

    s.image = canvas.to_image();
    for (const auto& c : config.registry.concepts()) {
        Mask m(w, h);
        for (auto& [name, pm] : painted) {
            if (name == c.name) m = pm;
        }
        // A concept fully painted over by later ones no longer exists in the image.
        if (presence[c.name] && m.empty()) presence[c.name] = false;
        s.concept_annotations[c.name] = presence[c.name] ? Annotation::present : Annotation::absent;
        s.concept_masks[c.name] = std::move(m);
    }
    std::map<std::string, bool> rule_inputs;
    for (const auto& [k, v] : presence) rule_inputs[k] = v;
    s.diagnosis = rule.classify(rule_inputs);

    s.metadata["age"] = std::to_string(rng.range(20, 85));
    s.metadata["sex"] = rng.bernoulli(0.5) ? "female" : "male";
    s.metadata["lesion_bbox"] = std::to_string(bx0) + "," + std::to_string(by0) + "," + std::to_string(bx1) + "," +
                                std::to_string(by1);
    return s;
}

SyntheticDataset generate(const GeneratorConfig& config) {
    config.validate();
    const Rule rule = Rule::parse(config.rule);
    SyntheticDataset ds;
    ds.registry = config.registry;
    ds.samples.reserve(static_cast<std::size_t>(config.samples));
    for (int i = 0; i < config.samples; ++i) ds.samples.push_back(generate_sample(config, rule, i));

    // Stratified split: order by (diagnosis, concept signature), shuffle
    // within each stratum, then deal train/validate/train/test/train.
    const auto names = config.registry.names();
    const auto key = [&](const ImageSample& s) {
        std::string k(1, s.diagnosis == Label::melanoma ? 'm' : 'n');
        for (const auto& n : names) k += s.annotation(n) == Annotation::present ? '1' : '0';
        return k;
    };
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) strata[key(ds.samples[i])].push_back(i);
    Rng split_rng(derive_seed(config.seed, "split"));
    static constexpr Split kPattern[] = {Split::train, Split::validate, Split::train, Split::test, Split::train};
    std::vector<Split> assignment(ds.samples.size(), Split::train);
    std::size_t dealt = 0;
    for (auto& [_, members] : strata) {
        split_rng.shuffle(members.begin(), members.end());
        for (std::size_t i : members) assignment[i] = kPattern[dealt++ % 5];
    }

    ds.manifest.root = ".";
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        ManifestEntry e;
        e.id = s.id;
        e.image = "images/" + s.id + ".png";
        e.diagnosis = s.diagnosis;
        e.split = assignment[i];
        e.annotations = s.concept_annotations;
        for (const auto& [concept_name, _] : s.concept_masks) e.masks[concept_name] = "masks/" + s.id + "_" + concept_name + ".png";
        e.meta = s.metadata;
        ds.manifest.entries.push_back(std::move(e));
    }
    return ds;
}

DatasetManifest write_dataset(const SyntheticDataset& dataset, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    DatasetManifest m = dataset.manifest;
    m.root = dir;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        const auto& e = m.entries[i];
        write_png(s.image, m.resolve(e.image));
        for (const auto& [concept_name, path] : e.masks) {
            const auto& mask = s.concept_masks.at(concept_name);
            write_mask_png(mask ? *mask : Mask(s.width(), s.height()), m.resolve(path));
        }
    }
    write_manifest(m, (fs::path(dir) / "manifest.jsonl").string());
    save_registry(dataset.registry, (fs::path(dir) / "registry.json").string());
    return m;
}

std::optional<BoundingBox> lesion_bbox(const Metadata& meta) {
    auto it = meta.find("lesion_bbox");
    if (it == meta.end()) return std::nullopt;
    BoundingBox b;
    if (std::sscanf(it->second.c_str(), "%d,%d,%d,%d", &b.x0, &b.y0, &b.x1, &b.y1) != 4) return std::nullopt;
    if (b.x1 < b.x0 || b.y1 < b.y0) return std::nullopt;
    return b;
}

}  // namespace cex
