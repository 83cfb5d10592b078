#include "tiered/device_models.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>

#include "tiered/errors.hpp"

namespace tiered {

namespace {

struct PublishedRow {
    const char* term;
    double estimate;
    double std_error;
    double t_value;
};

// Estimate / Std. Error / t value columns, in printed row order.
constexpr PublishedRow kNvmeWrite[] = {
    {"(Intercept)", -5.941e+00, 1.560e+01, -0.381},
    {"x1", 6.252e-01, 4.387e-01, 1.425},
    {"x3", -6.326e-05, 2.143e-04, -0.295},
    {"x4", 3.726e-05, 1.860e-05, 2.003},
    {"x5", 6.213e-11, 5.174e-11, 1.201},
    {"x1:x3", 1.667e-06, 6.784e-06, 0.246},
    {"x1:x4", -8.464e-07, 5.005e-07, -1.691},
    {"x3:x4", -1.650e-09, 5.655e-10, -2.917},
    {"x4:x5", 2.029e-16, 8.570e-17, 2.368},
    {"x3:x5", -6.564e-16, 1.541e-15, -0.426},
    {"x1:x3:x4", 1.973e-10, 1.510e-11, 13.061},
    {"x3:x4:x5", 1.103e-20, 2.343e-21, 4.706},
};

constexpr PublishedRow kNvmeRead[] = {
    {"(Intercept)", -6.059e+00, 8.802e+00, -0.688},
    {"x1", 2.182e-02, 2.475e-01, 0.088},
    {"x3", 1.009e-04, 1.209e-04, 0.835},
    {"x4", -3.566e-06, 1.049e-05, -0.340},
    {"x5", 6.963e-11, 2.920e-11, 2.385},
    {"x1:x3", -2.066e-07, 3.828e-06, -0.054},
    {"x1:x4", -1.165e-08, 2.824e-07, -0.041},
    {"x3:x4", -4.060e-10, 3.191e-10, -1.272},
    {"x4:x5", 1.259e-16, 4.835e-17, 2.603},
    {"x3:x5", -2.984e-15, 8.693e-16, -3.433},
    {"x1:x3:x4", -6.675e-12, 8.522e-12, -0.783},
    {"x3:x4:x5", 1.896e-20, 1.322e-21, 14.340},
};

constexpr PublishedRow kHddWrite[] = {
    {"(Intercept)", 7.297e+00, 5.837e+01, 0.125},
    {"x3", 4.318e-04, 1.776e-04, 2.432},
    {"x4", -4.354e-06, 1.464e-06, -2.974},
    {"x5", 1.002e-08, 1.321e-09, 7.586},
    {"x1", 3.869e-01, 8.273e-01, 0.468},
    {"x2", 6.664e+00, 1.060e+01, 0.629},
    {"x3:x4", 2.007e-11, 1.820e-09, 0.011},
    {"x5:x1", -7.486e-11, 1.208e-11, -6.196},
    {"x5:x2", -9.269e-10, 2.033e-10, -4.560},
    {"x1:x2", -9.916e-02, 1.444e-01, -0.687},
    {"x5:x1:x2", 8.344e-12, 1.890e-12, 4.416},
};

constexpr PublishedRow kHddRead[] = {
    {"(Intercept)", -3.771e-01, 8.013e+01, -0.005},
    {"x3", 5.913e-04, 2.106e-04, 2.808},
    {"x4", -1.584e-06, 1.729e-06, -0.916},
    {"x2", 8.933e+00, 1.326e+01, 0.673},
    {"x1", -2.563e+00, 1.400e+00, -1.830},
    {"x5", 6.274e-10, 2.154e-09, 0.291},
    {"x3:x4", 1.715e-08, 2.718e-09, 6.312},
    {"x2:x1", 3.694e-01, 2.113e-01, 1.749},
    {"x2:x5", -2.272e-10, 2.550e-10, -0.891},
    {"x1:x5", -4.751e-11, 2.038e-11, -2.332},
    {"x2:x1:x5", 5.167e-12, 2.662e-12, 1.941},
};

constexpr double kKiB = 1024.0;
constexpr double kMiB = kKiB * 1024.0;
constexpr double kGiB = kMiB * 1024.0;

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::size_t parse_variable(std::string_view token) {
    token = trim(token);
    if (token.size() != 2 || (token[0] != 'x' && token[0] != 'X') || token[1] < '1' ||
        token[1] > '0' + static_cast<int>(kPredictors)) {
        throw ConfigError("terms", "unknown variable '" + std::string(token) + "'");
    }
    return static_cast<std::size_t>(token[1] - '1');
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            parts.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return parts;
}

double parse_field(std::string_view text, std::size_t line) {
    text = trim(text);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value))
        throw ParseError(line, "bad number '" + std::string(text) + "'");
    return value;
}

}  // namespace

DeviceFamily family_of(Device device) {
    return device == Device::NvmeRead || device == Device::NvmeWrite ? DeviceFamily::Nvme
                                                                     : DeviceFamily::Hdd;
}

std::string_view to_string(Device device) {
    switch (device) {
        case Device::NvmeRead: return "nvme-read";
        case Device::NvmeWrite: return "nvme-write";
        case Device::HddRead: return "hdd-read";
        case Device::HddWrite: return "hdd-write";
    }
    return "?";
}

Device device_from_string(std::string_view name) {
    std::string n = lower(name);
    std::replace(n.begin(), n.end(), '_', '-');
    if (n == "nvme-read") return Device::NvmeRead;
    if (n == "nvme-write") return Device::NvmeWrite;
    if (n == "hdd-read") return Device::HddRead;
    if (n == "hdd-write") return Device::HddWrite;
    throw ConfigError("device", "unknown device '" + std::string(name) + "'");
}

Term parse_term(std::string_view name) {
    Term term;
    for (std::string_view part : split(name, ':')) term.push_back(parse_variable(part));
    std::sort(term.begin(), term.end());
    if (std::adjacent_find(term.begin(), term.end()) != term.end())
        throw ConfigError("terms", "repeated variable in '" + std::string(name) + "'");
    return term;
}

std::string term_name(const Term& term) {
    std::string out;
    for (std::size_t i = 0; i < term.size(); ++i) {
        if (i > 0) out += ':';
        out += 'x';
        out += static_cast<char>('1' + term[i]);
    }
    return out;
}

std::optional<std::size_t> ModelTermSet::coefficient_index(const Term& term) const {
    Term key = term;
    std::sort(key.begin(), key.end());
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i] == key) return i + 1;
    }
    return std::nullopt;
}

std::vector<std::string> ModelTermSet::names() const {
    std::vector<std::string> out{"(Intercept)"};
    for (const Term& t : terms) out.push_back(term_name(t));
    return out;
}

ModelTermSet parse_formula(std::string_view formula) {
    struct Candidate {
        Term term;
        std::size_t order;  // first appearance
    };
    std::vector<Candidate> found;
    auto add = [&](Term t) {
        std::sort(t.begin(), t.end());
        for (const auto& c : found) {
            if (c.term == t) return;
        }
        found.push_back({std::move(t), found.size()});
    };

    std::string_view body = trim(formula);
    if (const auto tilde = body.find('~'); tilde != std::string_view::npos) body = body.substr(tilde + 1);
    if (trim(body).empty()) throw ConfigError("terms", "empty formula");
    for (std::string_view group : split(body, '+')) {
        group = trim(group);
        if (group.empty()) throw ConfigError("terms", "empty term in formula");
        if (group.find('*') != std::string_view::npos) {
            std::vector<std::size_t> vars;
            for (std::string_view v : split(group, '*')) vars.push_back(parse_variable(v));
            const std::size_t n = vars.size();
            if (n > 16) throw ConfigError("terms", "too many factors");
            // Subsets in order of size, then lexicographic in the written order.
            for (std::size_t size = 1; size <= n; ++size) {
                for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
                    if (static_cast<std::size_t>(std::popcount(mask)) != size) continue;
                    Term t;
                    for (std::size_t b = 0; b < n; ++b) {
                        if (mask & (1u << b)) t.push_back(vars[b]);
                    }
                    Term sorted = t;
                    std::sort(sorted.begin(), sorted.end());
                    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
                        throw ConfigError("terms", "repeated variable in '" + std::string(group) + "'");
                    add(std::move(t));
                }
            }
        } else {
            add(parse_term(group));
        }
    }
    std::stable_sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
        return a.term.size() < b.term.size();
    });
    ModelTermSet set;
    for (auto& c : found) set.terms.push_back(std::move(c.term));
    return set;
}

ModelTermSet nvme_term_set() { return parse_formula("X1*X3*X4 + X5*X4*X3"); }
ModelTermSet hdd_term_set() { return parse_formula("X3*X4 + X5*X1*X2"); }

double DeviceModel::coefficient(std::string_view term) const {
    if (trim(term) == "(Intercept)") return coefficients.at(0);
    const auto idx = term_set.coefficient_index(parse_term(term));
    if (!idx) throw std::out_of_range("model has no term '" + std::string(term) + "'");
    return coefficients.at(*idx);
}

DeviceModel load_paper_model(Device device) {
    std::span<const PublishedRow> rows;
    switch (device) {
        case Device::NvmeWrite: rows = kNvmeWrite; break;
        case Device::NvmeRead: rows = kNvmeRead; break;
        case Device::HddWrite: rows = kHddWrite; break;
        case Device::HddRead: rows = kHddRead; break;
    }
    DeviceModel model;
    model.device = device;
    model.provenance = Provenance::PaperTable;
    for (const PublishedRow& row : rows) {
        if (std::string_view(row.term) != "(Intercept)") model.term_set.terms.push_back(parse_term(row.term));
        model.coefficients.push_back(row.estimate);
        model.std_errors.push_back(row.std_error);
        model.t_values.push_back(row.t_value);
    }
    return model;
}

double term_value(const Term& term, std::span<const double> x) {
    double v = 1.0;
    for (std::size_t idx : term) v *= x[idx];
    return v;
}

bool in_training_envelope(DeviceFamily family, std::span<const double> x) {
    auto within = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    if (family == DeviceFamily::Nvme) {
        return within(x[0], 8, 64) && within(x[2], 512, 262144) && within(x[3], 1000, 4e6) &&
               within(x[4], 500 * kMiB, 500 * kGiB);
    }
    return within(x[0], 4, 200) && within(x[1], 1, 8) && x[2] >= 0 &&
           within(x[3], 64 * kKiB, 64 * kMiB) && within(x[4], 100 * kMiB, 350 * kGiB);
}

Prediction predict(const DeviceModel& model, std::span<const double> x) {
    if (x.size() != kPredictors)
        throw std::invalid_argument("predict: expected " + std::to_string(kPredictors) +
                                    " predictors, got " + std::to_string(x.size()));
    if (model.coefficients.size() != model.term_set.n_coefficients())
        throw std::invalid_argument("predict: coefficient count does not match terms");
    double y = model.coefficients[0];
    for (std::size_t k = 0; k < model.term_set.terms.size(); ++k)
        y += model.coefficients[k + 1] * term_value(model.term_set.terms[k], x);
    return {y, !(y > 0.0) || !in_training_envelope(family_of(model.device), x)};
}

double per_request_seconds(const DeviceModel& model, std::span<const double> x, double floor_seconds) {
    const double total = predict(model, x).seconds;
    const double count = family_of(model.device) == DeviceFamily::Nvme ? x[3] : x[1] * x[2];
    if (!(count > 0.0)) throw std::invalid_argument("per_request_seconds: request count must be positive");
    return std::max(total / count, floor_seconds);
}

DeviceModel fit(Device device, const ModelTermSet& term_set, std::span<const TrainingSample> samples) {
    const std::size_t p = term_set.n_coefficients();
    const std::size_t n = samples.size();
    if (n <= p) {
        throw NumericalError("under-determined fit: " + std::to_string(n) + " samples for " +
                             std::to_string(p) + " coefficients (need more than " + std::to_string(p) + ")");
    }
    const std::vector<std::string> names = term_set.names();

    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (std::size_t k = 0; k < term_set.terms.size(); ++k)
            X(i, k + 1) = term_value(term_set.terms[k], samples[i].x);
        y(i) = samples[i].observed_time;
    }

    // Predictor products span ~30 orders of magnitude; solve in unit-norm columns.
    Eigen::VectorXd scale(p);
    for (std::size_t k = 0; k < p; ++k) {
        const double norm = X.col(k).norm();
        if (norm == 0.0) throw NumericalError("rank-deficient design: column '" + names[k] + "' is all zero");
        scale(k) = norm;
    }
    const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();

    constexpr double kPivotTolerance = 1e-10;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
    qr.setThreshold(kPivotTolerance);
    if (static_cast<std::size_t>(qr.rank()) < p) {
        // Each dependent column, plus the independent columns that reproduce it.
        const auto& perm = qr.colsPermutation().indices();
        const Eigen::Index rank = qr.rank();
        Eigen::MatrixXd basis(static_cast<Eigen::Index>(n), rank);
        for (Eigen::Index k = 0; k < rank; ++k) basis.col(k) = Xs.col(perm(k));
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> basis_qr(basis);
        std::vector<bool> involved(p, false);
        for (Eigen::Index k = rank; k < static_cast<Eigen::Index>(p); ++k) {
            involved[static_cast<std::size_t>(perm(k))] = true;
            const Eigen::VectorXd combo = basis_qr.solve(Xs.col(perm(k)));
            for (Eigen::Index j = 0; j < rank; ++j)
                if (std::abs(combo(j)) > 1e-8) involved[static_cast<std::size_t>(perm(j))] = true;
        }
        std::string collinear;
        for (std::size_t k = 0; k < p; ++k) {
            if (!involved[k]) continue;
            if (!collinear.empty()) collinear += ", ";
            collinear += names[k];
        }
        throw NumericalError("rank-deficient design matrix: collinear terms " + collinear);
    }

    // Normal equations first; QR when the Gram matrix is too ill-conditioned.
    const Eigen::MatrixXd gram = Xs.transpose() * Xs;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    Eigen::VectorXd beta_scaled;
    const auto d = ldlt.vectorD().cwiseAbs();
    if (ldlt.info() == Eigen::Success && d.minCoeff() > kPivotTolerance * d.maxCoeff()) {
        beta_scaled = ldlt.solve(Xs.transpose() * y);
    } else {
        beta_scaled = qr.solve(y);
    }
    const Eigen::VectorXd residual = y - Xs * beta_scaled;
    const Eigen::VectorXd beta = beta_scaled.cwiseQuotient(scale);

    const double rss = residual.squaredNorm();
    const double mean = y.mean();
    const double tss = (y.array() - mean).square().sum();
    const std::size_t dof = n - p;
    const double sigma2 = rss / static_cast<double>(dof);

    // (Xs^T Xs)^-1 via the QR factors: R^-1 R^-T, permuted back.
    const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd cov_perm = Rinv * Rinv.transpose();
    const auto& perm = qr.colsPermutation().indices();

    DeviceModel model;
    model.device = device;
    model.term_set = term_set;
    model.provenance = Provenance::Fitted;
    model.coefficients.resize(p);
    model.std_errors.resize(p);
    model.t_values.resize(p);
    for (std::size_t k = 0; k < p; ++k) model.coefficients[k] = beta(static_cast<Eigen::Index>(k));
    for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(p); ++a) {
        const auto col = static_cast<std::size_t>(perm(a));
        const double se = std::sqrt(sigma2 * cov_perm(a, a)) / scale(perm(a));
        model.std_errors[col] = se;
        model.t_values[col] = se > 0.0 ? model.coefficients[col] / se
                                       : std::copysign(INFINITY, model.coefficients[col]);
    }
    model.fit = FitStatistics{tss > 0.0 ? 1.0 - rss / tss : 1.0, std::sqrt(sigma2), n, dof};
    return model;
}

std::vector<TrainingSample> parse_training(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line) != "x1,x2,x3,x4,x5,y_seconds")
        throw ParseError(1, "expected header 'x1,x2,x3,x4,x5,y_seconds'");
    std::vector<TrainingSample> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != kPredictors + 1) throw ParseError(line_no, "expected 6 fields");
        TrainingSample s;
        for (std::size_t k = 0; k < kPredictors; ++k) {
            s.x[k] = parse_field(fields[k], line_no);
            if (s.x[k] < 0.0) throw ParseError(line_no, "predictor x" + std::to_string(k + 1) + " is negative");
        }
        s.observed_time = parse_field(fields[kPredictors], line_no);
        if (!(s.observed_time > 0.0)) throw ParseError(line_no, "y_seconds must be positive");
        out.push_back(s);
    }
    return out;
}

std::vector<TrainingSample> load_training(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("training", "cannot open '" + path.string() + "'");
    return parse_training(in);
}

void write_training(std::ostream& out, std::span<const TrainingSample> samples) {
    out << "x1,x2,x3,x4,x5,y_seconds\n";
    char buf[64];
    for (const auto& s : samples) {
        for (std::size_t k = 0; k <= kPredictors; ++k) {
            const double v = k < kPredictors ? s.x[k] : s.observed_time;
            const auto res = std::to_chars(buf, buf + sizeof buf, v);
            out.write(buf, res.ptr - buf);
            out << (k < kPredictors ? ',' : '\n');
        }
    }
}

nlohmann::json to_json(const DeviceModel& model) {
    nlohmann::json j;
    j["device"] = std::string(to_string(model.device));
    j["family"] = family_of(model.device) == DeviceFamily::Nvme ? "nvme" : "hdd";
    j["provenance"] = model.provenance == Provenance::PaperTable ? "paper_table" : "fitted";
    j["terms"] = model.term_set.names();
    j["coefficients"] = model.coefficients;
    if (!model.std_errors.empty()) j["std_errors"] = model.std_errors;
    if (!model.t_values.empty()) j["t_values"] = model.t_values;
    if (model.fit) {
        j["r_squared"] = model.fit->r_squared;
        j["residual_standard_error"] = model.fit->residual_standard_error;
        j["n_samples"] = model.fit->n_samples;
        j["degrees_of_freedom"] = model.fit->degrees_of_freedom;
    }
    return j;
}

DeviceModel model_from_json(const nlohmann::json& j) {
    DeviceModel model;
    model.device = device_from_string(j.at("device").get<std::string>());
    model.provenance = j.at("provenance").get<std::string>() == "fitted" ? Provenance::Fitted
                                                                          : Provenance::PaperTable;
    const auto names = j.at("terms").get<std::vector<std::string>>();
    if (names.empty() || names.front() != "(Intercept)")
        throw ConfigError("terms", "first term must be (Intercept)");
    for (std::size_t i = 1; i < names.size(); ++i) model.term_set.terms.push_back(parse_term(names[i]));
    model.coefficients = j.at("coefficients").get<std::vector<double>>();
    if (model.coefficients.size() != names.size())
        throw ConfigError("coefficients", "count does not match terms");
    if (j.contains("std_errors")) model.std_errors = j["std_errors"].get<std::vector<double>>();
    if (j.contains("t_values")) model.t_values = j["t_values"].get<std::vector<double>>();
    if (j.contains("r_squared")) {
        model.fit = FitStatistics{j["r_squared"].get<double>(), j["residual_standard_error"].get<double>(),
                                  j["n_samples"].get<std::size_t>(), j["degrees_of_freedom"].get<std::size_t>()};
    }
    return model;
}

}  // namespace tiered
