#include "cex/analytics.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include <Eigen/Dense>

#include "cex/error.hpp"
#include "cex/synthetic.hpp"

namespace cex {

const ConceptAssessment* CaseRecord::assessment(const std::string& concept_name) const {
    for (const auto& a : explanation.assessments) {
        if (a.concept_name == concept_name) return &a;
    }
    return nullptr;
}

std::optional<bool> CaseRecord::correct() const {
    if (!diagnosis) return std::nullopt;
    return *diagnosis == explanation.predicted;
}

// ---------------------------------------------------------------------------
// Metrics

std::optional<double> roc_auc(std::span<const double> scores, std::span<const Label> truth) {
    if (scores.size() != truth.size()) fail(Errc::shape, "AUC: score and label counts differ");
    std::size_t pos = 0, neg = 0;
    for (Label l : truth) (l == Label::melanoma ? pos : neg)++;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double area = 0.0, prev_tpr = 0.0, prev_fpr = 0.0;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        // A group of tied scores moves diagonally.
        while (i < order.size() && scores[order[i]] == s) {
            (truth[order[i]] == Label::melanoma ? tp : fp)++;
            ++i;
        }
        const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
        const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    return area;
}

namespace {

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
    ClassMetrics m;
    m.support = tp + fn;
    m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

}  // namespace

MetricsReport compute_metrics(std::span<const double> scores, std::span<const Label> truth,
                              std::span<const Label> predicted) {
    if (truth.empty()) fail(Errc::insufficient_data, "metrics of an empty split");
    if (scores.size() != truth.size() || predicted.size() != truth.size()) {
        fail(Errc::shape, "metrics: input lengths differ");
    }
    MetricsReport r;
    r.n = truth.size();
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] == Label::melanoma, p = predicted[i] == Label::melanoma;
        if (t && p) ++r.tp;
        else if (!t && p) ++r.fp;
        else if (!t && !p) ++r.tn;
        else ++r.fn;
    }
    r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.n);
    r.melanoma = class_metrics(r.tp, r.fp, r.fn);
    r.nevus = class_metrics(r.tn, r.fn, r.fp);
    r.precision = r.melanoma.precision;
    r.recall = r.melanoma.recall;
    r.macro_f1 = 0.5 * (r.melanoma.f1 + r.nevus.f1);
    r.auc = roc_auc(scores, truth);
    return r;
}

MetricsReport evaluate_model(const ClassifierModel& model, std::span<const ImageSample> samples) {
    std::vector<double> scores;
    std::vector<Label> truth, predicted;
    for (const auto& s : samples) {
        if (!s.diagnosis) continue;
        const auto p = model.class_probabilities(s);
        scores.push_back(p[encode(Label::melanoma)]);
        truth.push_back(*s.diagnosis);
        predicted.push_back(p[encode(Label::melanoma)] > p[encode(Label::nevus)] ? Label::melanoma : Label::nevus);
    }
    if (truth.empty()) fail(Errc::insufficient_data, "evaluation split has no labelled samples");
    return compute_metrics(scores, truth, predicted);
}

MetricsReport evaluate_records(std::span<const CaseRecord* const> records) {
    std::vector<double> scores;
    std::vector<Label> truth, predicted;
    for (const auto* r : records) {
        if (!r->diagnosis) continue;
        scores.push_back(r->explanation.probabilities[encode(Label::melanoma)]);
        truth.push_back(*r->diagnosis);
        predicted.push_back(r->explanation.predicted);
    }
    if (truth.empty()) fail(Errc::insufficient_data, "no labelled records to evaluate");
    return compute_metrics(scores, truth, predicted);
}

// ---------------------------------------------------------------------------
// Filters

FilterPredicate FilterPredicate::conjoin(const FilterPredicate& other) const {
    FilterPredicate p = *this;
    p.atoms.insert(p.atoms.end(), other.atoms.begin(), other.atoms.end());
    return p;
}

namespace {

enum class FieldRoot { id, split, diagnosis, prediction, correct, melanoma_probability, meta, annotations, grades,
                       concepts, probabilities, influence };

struct ResolvedField {
    FieldRoot root;
    std::string key;
};

ResolvedField resolve_field(const std::string& path, const ConceptRegistry* registry) {
    const auto dot = path.find('.');
    const std::string head = path.substr(0, dot);
    const std::string key = dot == std::string::npos ? std::string() : path.substr(dot + 1);
    static const std::pair<const char*, FieldRoot> scalars[] = {
        {"id", FieldRoot::id}, {"split", FieldRoot::split}, {"diagnosis", FieldRoot::diagnosis},
        {"prediction", FieldRoot::prediction}, {"correct", FieldRoot::correct},
        {"melanoma_probability", FieldRoot::melanoma_probability}};
    for (const auto& [name, root] : scalars) {
        if (head == name) {
            if (dot != std::string::npos) fail(Errc::validation, "filter: field '" + head + "' has no sub-fields");
            return {root, {}};
        }
    }
    static const std::pair<const char*, FieldRoot> maps[] = {
        {"meta", FieldRoot::meta}, {"annotations", FieldRoot::annotations}, {"grades", FieldRoot::grades},
        {"concepts", FieldRoot::concepts}, {"probabilities", FieldRoot::probabilities},
        {"influence", FieldRoot::influence}};
    for (const auto& [name, root] : maps) {
        if (head != name) continue;
        if (root != FieldRoot::meta && !key.empty() && registry && !registry->contains(key)) {
            fail(Errc::validation, "filter: unknown concept '" + key + "' in '" + path + "'");
        }
        return {root, key};
    }
    fail(Errc::validation, "filter: unresolvable field '" + path + "'");
}

using Value = std::variant<std::monostate, std::string, double, bool>;

Value field_value(const CaseRecord& r, const ResolvedField& f) {
    switch (f.root) {
        case FieldRoot::id: return r.id;
        case FieldRoot::split: return r.split ? Value(std::string(to_string(*r.split))) : Value{};
        case FieldRoot::diagnosis: return r.diagnosis ? Value(std::string(to_string(*r.diagnosis))) : Value{};
        case FieldRoot::prediction: return std::string(to_string(r.explanation.predicted));
        case FieldRoot::correct: {
            auto c = r.correct();
            return c ? Value(*c) : Value{};
        }
        case FieldRoot::melanoma_probability: return r.explanation.probabilities[encode(Label::melanoma)];
        case FieldRoot::meta: {
            auto it = r.meta.find(f.key);
            return it == r.meta.end() ? Value{} : Value(it->second);
        }
        case FieldRoot::annotations: {
            auto it = r.annotations.find(f.key);
            return std::string(to_string(it == r.annotations.end() ? Annotation::unknown : it->second));
        }
        case FieldRoot::grades: {
            const auto* a = r.assessment(f.key);
            return a ? Value(std::string(to_string(a->grade))) : Value{};
        }
        case FieldRoot::concepts: {
            const auto* a = r.assessment(f.key);
            if (!a) return Value{};
            return std::string(a->grade == Grade::absent ? "absent" : "present");
        }
        case FieldRoot::probabilities: {
            const auto* a = r.assessment(f.key);
            return a ? Value(a->probability) : Value{};
        }
        case FieldRoot::influence: {
            const auto* a = r.assessment(f.key);
            return a && a->influence ? Value(std::string(to_string(*a->influence))) : Value{};
        }
    }
    return Value{};
}

std::optional<double> as_number(const std::string& s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
    return v;
}

template <typename T>
bool compare(const T& a, FilterOp op, const T& b) {
    switch (op) {
        case FilterOp::eq: return a == b;
        case FilterOp::ne: return a != b;
        case FilterOp::lt: return a < b;
        case FilterOp::le: return a <= b;
        case FilterOp::gt: return a > b;
        case FilterOp::ge: return a >= b;
        case FilterOp::has: return false;
    }
    return false;
}

bool is_ordering(FilterOp op) { return op == FilterOp::lt || op == FilterOp::le || op == FilterOp::gt || op == FilterOp::ge; }

const char* op_text(FilterOp op) {
    switch (op) {
        case FilterOp::eq: return "=";
        case FilterOp::ne: return "!=";
        case FilterOp::lt: return "<";
        case FilterOp::le: return "<=";
        case FilterOp::gt: return ">";
        case FilterOp::ge: return ">=";
        case FilterOp::has: return "has";
    }
    return "=";
}

bool eval_atom(const CaseRecord& r, const FilterAtom& atom) {
    const ResolvedField f = resolve_field(atom.field, nullptr);
    if (atom.op == FilterOp::has) {
        if (f.key.empty() && (f.root == FieldRoot::meta || f.root == FieldRoot::annotations ||
                              f.root == FieldRoot::grades || f.root == FieldRoot::concepts ||
                              f.root == FieldRoot::probabilities || f.root == FieldRoot::influence)) {
            const std::string& key = atom.value.text;
            switch (f.root) {
                case FieldRoot::meta: return r.meta.count(key) > 0;
                case FieldRoot::annotations: {
                    auto it = r.annotations.find(key);
                    return it != r.annotations.end() && it->second != Annotation::unknown;
                }
                case FieldRoot::influence: {
                    const auto* a = r.assessment(key);
                    return a && a->influence.has_value();
                }
                default: return r.assessment(key) != nullptr;
            }
        }
        const Value v = field_value(r, f);
        if (std::holds_alternative<std::monostate>(v)) return false;
        if (!std::holds_alternative<std::string>(v)) fail(Errc::type_mismatch, "filter: 'has' needs a text field, got '" + atom.field + "'");
        return std::get<std::string>(v).find(atom.value.text) != std::string::npos;
    }

    const Value v = field_value(r, f);
    if (std::holds_alternative<std::monostate>(v)) return false;
    const FilterValue& lit = atom.value;
    if (const auto* b = std::get_if<bool>(&v)) {
        if (lit.kind != FilterValue::Kind::boolean || is_ordering(atom.op)) {
            fail(Errc::type_mismatch, "filter: '" + atom.field + "' is boolean");
        }
        return compare(*b, atom.op, lit.boolean);
    }
    if (const auto* d = std::get_if<double>(&v)) {
        if (lit.kind != FilterValue::Kind::number) fail(Errc::type_mismatch, "filter: '" + atom.field + "' is numeric");
        return compare(*d, atom.op, lit.number);
    }
    const std::string& s = std::get<std::string>(v);
    if (lit.kind == FilterValue::Kind::boolean) fail(Errc::type_mismatch, "filter: '" + atom.field + "' is not boolean");
    if (lit.kind == FilterValue::Kind::number) {
        const auto n = as_number(s);
        if (!n) {
            if (is_ordering(atom.op)) fail(Errc::type_mismatch, "filter: '" + atom.field + "' value '" + s + "' is not numeric");
            return atom.op == FilterOp::ne;
        }
        return compare(*n, atom.op, lit.number);
    }
    if (is_ordering(atom.op)) fail(Errc::type_mismatch, "filter: ordering comparison on text field '" + atom.field + "'");
    return compare(s, atom.op, lit.text);
}

struct FilterLexer {
    const std::string& s;
    std::size_t i = 0;

    void skip() {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    }
    bool done() {
        skip();
        return i >= s.size();
    }
    [[noreturn]] void error(const std::string& what) const {
        fail(Errc::parse, "filter: " + what + " at position " + std::to_string(i));
    }
    std::string word() {
        skip();
        const std::size_t start = i;
        while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '.' || s[i] == '-')) ++i;
        if (start == i) error("expected a field name");
        return s.substr(start, i - start);
    }
    FilterOp op() {
        skip();
        static const std::pair<const char*, FilterOp> ops[] = {
            {"≠", FilterOp::ne}, {"≤", FilterOp::le}, {"≥", FilterOp::ge}, {"!=", FilterOp::ne},
            {"<=", FilterOp::le},     {">=", FilterOp::ge},     {"==", FilterOp::eq},     {"=", FilterOp::eq},
            {"<", FilterOp::lt},      {">", FilterOp::gt}};
        for (const auto& [text, op] : ops) {
            const std::string_view t(text);
            if (s.compare(i, t.size(), t) == 0) {
                i += t.size();
                return op;
            }
        }
        if (s.compare(i, 3, "has") == 0 && (i + 3 >= s.size() || std::isspace(static_cast<unsigned char>(s[i + 3])))) {
            i += 3;
            return FilterOp::has;
        }
        error("expected an operator");
    }
    FilterValue value() {
        skip();
        if (i >= s.size()) error("expected a value");
        FilterValue v;
        if (s[i] == '"' || s[i] == '\'') {
            const char quote = s[i++];
            std::string text;
            while (i < s.size() && s[i] != quote) {
                if (s[i] == '\\' && i + 1 < s.size()) ++i;
                text.push_back(s[i++]);
            }
            if (i >= s.size()) error("unterminated string");
            ++i;
            v.text = text;
            return v;
        }
        const std::size_t start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        v.text = s.substr(start, i - start);
        if (v.text == "true" || v.text == "false") {
            v.kind = FilterValue::Kind::boolean;
            v.boolean = v.text == "true";
        } else if (const auto n = as_number(v.text)) {
            v.kind = FilterValue::Kind::number;
            v.number = *n;
        }
        return v;
    }
    bool keyword_and() {
        skip();
        if (i + 3 <= s.size()) {
            std::string w = s.substr(i, 3);
            for (auto& c : w) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            if (w == "AND" && (i + 3 == s.size() || std::isspace(static_cast<unsigned char>(s[i + 3])))) {
                i += 3;
                return true;
            }
        }
        return false;
    }
};

}  // namespace

FilterPredicate parse_filter(const std::string& text, const ConceptRegistry& registry) {
    FilterPredicate p;
    FilterLexer lex{text};
    if (lex.done()) return p;
    while (true) {
        FilterAtom atom;
        atom.field = lex.word();
        atom.op = lex.op();
        atom.value = lex.value();
        const ResolvedField f = resolve_field(atom.field, &registry);
        const bool map_root = f.key.empty() && (f.root == FieldRoot::meta || f.root == FieldRoot::annotations ||
                                                f.root == FieldRoot::grades || f.root == FieldRoot::concepts ||
                                                f.root == FieldRoot::probabilities || f.root == FieldRoot::influence);
        if (map_root && atom.op != FilterOp::has) {
            fail(Errc::validation, "filter: '" + atom.field + "' needs a key (e.g. " + atom.field + ".name)");
        }
        if (map_root && f.root != FieldRoot::meta && !registry.contains(atom.value.text)) {
            fail(Errc::validation, "filter: unknown concept '" + atom.value.text + "'");
        }
        p.atoms.push_back(std::move(atom));
        if (lex.done()) break;
        if (!lex.keyword_and()) lex.error("expected AND");
    }
    return p;
}

std::string to_string(const FilterPredicate& predicate) {
    std::string out;
    for (std::size_t i = 0; i < predicate.atoms.size(); ++i) {
        const auto& a = predicate.atoms[i];
        if (i) out += " AND ";
        out += a.field + " " + op_text(a.op) + " ";
        out += a.value.kind == FilterValue::Kind::string && (a.value.text.empty() || a.value.text.find(' ') != std::string::npos)
                   ? "\"" + a.value.text + "\""
                   : a.value.text;
    }
    return out;
}

bool matches(const CaseRecord& record, const FilterPredicate& predicate) {
    for (const auto& atom : predicate.atoms) {
        if (!eval_atom(record, atom)) return false;
    }
    return true;
}

std::vector<const CaseRecord*> apply_filter(std::span<const CaseRecord> records, const FilterPredicate& predicate) {
    std::vector<const CaseRecord*> out;
    for (const auto& r : records) {
        if (matches(r, predicate)) out.push_back(&r);
    }
    return out;
}

std::vector<const CaseRecord*> apply_filter(std::span<const CaseRecord* const> records,
                                            const FilterPredicate& predicate) {
    std::vector<const CaseRecord*> out;
    for (const auto* r : records) {
        if (matches(*r, predicate)) out.push_back(r);
    }
    return out;
}

std::string_view to_string(Accordance a) noexcept {
    switch (a) {
        case Accordance::agree: return "agree";
        case Accordance::disagree: return "disagree";
        case Accordance::unknown: return "unknown";
    }
    return "unknown";
}

std::vector<HighlightResult> highlight(std::span<const CaseRecord* const> records, const FilterPredicate& predicate) {
    // Predicted attributes with a ground-truth counterpart.
    bool uses_prediction = false;
    std::vector<std::string> concepts;
    for (const auto& atom : predicate.atoms) {
        const ResolvedField f = resolve_field(atom.field, nullptr);
        if (f.root == FieldRoot::prediction) uses_prediction = true;
        if ((f.root == FieldRoot::concepts || f.root == FieldRoot::grades) && !f.key.empty() &&
            std::find(concepts.begin(), concepts.end(), f.key) == concepts.end()) {
            concepts.push_back(f.key);
        }
    }
    std::vector<HighlightResult> out;
    out.reserve(records.size());
    for (const auto* r : records) {
        HighlightResult h;
        h.flag = matches(*r, predicate);
        if (uses_prediction || !concepts.empty()) {
            bool any_disagree = false, any_unknown = false;
            if (uses_prediction) {
                if (!r->diagnosis) any_unknown = true;
                else any_disagree |= *r->diagnosis != r->explanation.predicted;
            }
            for (const auto& c : concepts) {
                auto it = r->annotations.find(c);
                const auto* a = r->assessment(c);
                if (it == r->annotations.end() || it->second == Annotation::unknown || !a) {
                    any_unknown = true;
                    continue;
                }
                const bool predicted = a->grade != Grade::absent;
                any_disagree |= predicted != (it->second == Annotation::present);
            }
            h.accordance = any_disagree ? Accordance::disagree : any_unknown ? Accordance::unknown : Accordance::agree;
        }
        out.push_back(h);
    }
    return out;
}

Histogram distribution(std::span<const CaseRecord* const> records) {
    Histogram h;
    for (const auto* r : records) {
        ++h["prediction"][std::string(to_string(r->explanation.predicted))];
        ++h["diagnosis"][r->diagnosis ? std::string(to_string(*r->diagnosis)) : "unknown"];
        const auto c = r->correct();
        ++h["correct"][c ? (*c ? "true" : "false") : "unknown"];
        for (const auto& a : r->explanation.assessments) ++h["grades." + a.concept_name][std::string(to_string(a.grade))];
        for (const auto& [concept_name, ann] : r->annotations) ++h["annotations." + concept_name][std::string(to_string(ann))];
    }
    return h;
}

// ---------------------------------------------------------------------------
// Localisation summaries

ClmSummary summarize_clm(const ConceptLocalisationMap& map, const Metadata& meta) {
    ClmSummary s;
    s.sample_id = map.sample_id;
    s.peak = argmax(map);
    const auto box = lesion_bbox(meta);
    if (s.peak && box) {
        double inside = 0.0, total = 0.0;
        for (int y = 0; y < map.height; ++y) {
            for (int x = 0; x < map.width; ++x) {
                const double v = map.at(x, y);
                total += v;
                if (box->contains(x, y)) inside += v;
            }
        }
        s.mass_in_lesion = inside / total;
    }
    return s;
}

std::vector<ClmSummary> batch_clm(const ClassifierModel& model, const ConceptProbe& probe,
                                  std::span<const ImageSample> samples, const ClmConfig& config) {
    std::vector<ClmSummary> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(summarize_clm(compute_clm(model, probe, s, config), s.metadata));
    return out;
}

// ---------------------------------------------------------------------------
// PCA

Projection pca(const ActivationMatrix& activations, int dims) {
    if (dims != 2 && dims != 3) fail(Errc::validation, "projection dims must be 2 or 3");
    const auto n = static_cast<Eigen::Index>(activations.rows);
    const auto d = static_cast<Eigen::Index>(activations.cols);
    if (n < dims + 1) fail(Errc::insufficient_data, "projection needs at least dims + 1 records");
    if (d < dims) fail(Errc::validation, "projection dims exceed the feature count");

    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) X(i, j) = activations.values[static_cast<std::size_t>(i * d + j)];
    }
    const Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;

    Projection p;
    p.dims = dims;
    p.coordinates.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(dims), 0.0));
    p.explained_variance_ratio.assign(static_cast<std::size_t>(dims), 0.0);
    p.components.assign(static_cast<std::size_t>(dims), std::vector<double>(static_cast<std::size_t>(d), 0.0));

    const double total = X.squaredNorm();
    if (!(total > 0.0)) {
        p.degenerate = true;
        return p;
    }

    // Eigenpairs in activation space, largest first. Uses the Gram matrix
    // when there are fewer records than features.
    Eigen::MatrixXd vecs(d, dims);
    Eigen::VectorXd vals(dims);
    if (d <= n) {
        const Eigen::MatrixXd cov = X.transpose() * X;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        for (int k = 0; k < dims; ++k) {
            const Eigen::Index col = d - 1 - k;
            vals(k) = es.eigenvalues()(col);
            vecs.col(k) = es.eigenvectors().col(col);
        }
    } else {
        const Eigen::MatrixXd gram = X * X.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        for (int k = 0; k < dims; ++k) {
            const Eigen::Index col = n - 1 - k;
            vals(k) = es.eigenvalues()(col);
            Eigen::VectorXd v = X.transpose() * es.eigenvectors().col(col);
            const double norm = v.norm();
            vecs.col(k) = norm > 0 ? Eigen::VectorXd(v / norm) : Eigen::VectorXd::Zero(d);
        }
    }

    for (int k = 0; k < dims; ++k) {
        Eigen::Index arg = 0;
        for (Eigen::Index j = 1; j < d; ++j) {
            if (std::abs(vecs(j, k)) > std::abs(vecs(arg, k))) arg = j;
        }
        if (vecs(arg, k) < 0) vecs.col(k) = -vecs.col(k);
        p.explained_variance_ratio[static_cast<std::size_t>(k)] = std::max(vals(k), 0.0) / total;
        for (Eigen::Index j = 0; j < d; ++j) p.components[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] = vecs(j, k);
    }
    const Eigen::MatrixXd coords = X * vecs;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k < dims; ++k) p.coordinates[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = coords(i, k);
    }
    return p;
}

Projection latent_projection(const ClassifierModel& model, std::span<const ImageSample> samples,
                             const std::string& layer, int dims) {
    if (samples.size() < static_cast<std::size_t>(dims + 1)) {
        fail(Errc::insufficient_data, "projection needs at least dims + 1 records");
    }
    const ActivationCache cache(model, samples, {layer});
    return pca(cache.layer(layer), dims);
}

std::vector<TcavResult> global_tcav_table(const ProbeBundle& bundle, const ClassifierModel& model,
                                          std::span<const ImageSample> samples) {
    std::vector<TcavResult> out;
    for (Label cls : {Label::melanoma, Label::nevus}) {
        std::vector<InputTensor> inputs;
        for (const auto& s : samples) {
            if (s.diagnosis == cls) inputs.push_back(model.prepare(s.image));
        }
        if (inputs.empty()) {
            fail(Errc::insufficient_data, "no samples of class " + std::string(to_string(cls)) + " for the TCAV table");
        }
        for (const auto& probe : bundle.probes) out.push_back(tcav_score(probe, model, inputs, cls));
    }
    return out;
}

}  // namespace cex
