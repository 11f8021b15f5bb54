#include "disentangle/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace disentangle {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (long i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vector_from_json(const json& a) {
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v(i) = a[i].get<double>();
    return v;
}

json matrix_to_json_row_major(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (long i = 0; i < m.rows(); ++i)
        for (long j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
    return a;
}

Eigen::MatrixXd matrix_from_json_row_major(const json& a, long rows, long cols) {
    if (static_cast<long>(a.size()) != rows * cols) throw Error("matrix payload has wrong length");
    Eigen::MatrixXd m(rows, cols);
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j) m(i, j) = a[i * cols + j].get<double>();
    return m;
}

json covariate_law_to_json(const CovariateLaw& law) {
    if (std::holds_alternative<StdNormalLaw>(law))
        return {{"type", "standard_normal"}, {"dim", std::get<StdNormalLaw>(law).dim}};
    const auto& cat = std::get<CategoricalLaw>(law);
    json support = json::array();
    for (long r = 0; r < cat.support.rows(); ++r) support.push_back(vector_to_json(cat.support.row(r).transpose()));
    return {{"type", "categorical"}, {"support", support}, {"probs", vector_to_json(cat.probs)}};
}

CovariateLaw covariate_law_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "standard_normal") return StdNormalLaw{j.at("dim").get<int>()};
    if (type != "categorical") throw Error("unknown covariate law type '" + type + "'");
    const json& support = j.at("support");
    if (support.empty()) throw Error("categorical covariate law has empty support");
    const long dim = static_cast<long>(support[0].size());
    Eigen::MatrixXd s(support.size(), dim);
    for (std::size_t r = 0; r < support.size(); ++r) s.row(r) = vector_from_json(support[r]).transpose();
    CategoricalLaw law{s, vector_from_json(j.at("probs"))};
    validate_covariate_law(law);
    return law;
}

}  // namespace

json scm_to_json(const SymmetricAnm& scm) {
    json theta = json::array();
    for (const auto& eq : scm.treatment_eqs) theta.push_back(vector_to_json(eq.theta));
    theta.push_back(vector_to_json(scm.outcome_eq.theta));
    return {{"K", scm.K},
            {"covariate_dim", scm.covariate_dim},
            {"theta", theta},
            {"sigma", matrix_to_json_row_major(scm.sigma.mat())},
            {"covariate_law", covariate_law_to_json(scm.covariate_law)}};
}

SymmetricAnm scm_from_json(const json& j) {
    const int K = j.at("K").get<int>();
    const int m = j.at("covariate_dim").get<int>();
    const json& theta = j.at("theta");
    if (static_cast<int>(theta.size()) != K + 1) throw Error("scm json: expected K+1 theta arrays");
    std::vector<StructuralEq> eqs;
    for (int k = 0; k < K; ++k) eqs.emplace_back(PolyBasis{m}, vector_from_json(theta[k]));
    StructuralEq outcome(PolyBasis{m + K}, vector_from_json(theta[K]));
    CovMatrix sigma(matrix_from_json_row_major(j.at("sigma"), K + 1, K + 1));
    return SymmetricAnm(K, m, std::move(eqs), std::move(outcome), std::move(sigma),
                        covariate_law_from_json(j.at("covariate_law")));
}

std::string dataset_to_csv(const Dataset& ds) {
    ds.validate();
    std::ostringstream os;
    os << "regime_id";
    for (int j = 0; j < ds.m(); ++j) os << ",c_" << j;
    for (int j = 0; j < ds.K(); ++j) os << ",x_" << j;
    for (int j = 0; j < ds.K(); ++j) os << ",i_" << j;
    os << ",y\n";
    for (long r = 0; r < ds.n(); ++r) {
        os << ds.regime_id[r];
        for (int j = 0; j < ds.m(); ++j) os << ',' << format_double(ds.covariates(r, j));
        for (int j = 0; j < ds.K(); ++j) os << ',' << format_double(ds.treatments(r, j));
        for (int j = 0; j < ds.K(); ++j) os << ',' << (ds.intervened(r, j) ? 1 : 0);
        os << ',' << format_double(ds.outcome(r)) << '\n';
    }
    return os.str();
}

Dataset dataset_from_csv(const std::string& text, const std::string& filename) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty file", filename, 0);

    // Header fixes m and K.
    std::vector<std::string> header;
    {
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                header.push_back(cur);
                cur.clear();
            } else if (ch != '\r') {
                cur += ch;
            }
        }
        header.push_back(cur);
    }
    if (header.empty() || header[0] != "regime_id") throw ParseError("header must start with regime_id", filename, 1);
    int m = 0, K = 0;
    std::size_t pos = 1;
    while (pos < header.size() && header[pos] == "c_" + std::to_string(m)) ++pos, ++m;
    while (pos < header.size() && header[pos] == "x_" + std::to_string(K)) ++pos, ++K;
    for (int j = 0; j < K; ++j, ++pos)
        if (pos >= header.size() || header[pos] != "i_" + std::to_string(j))
            throw ParseError("expected column i_" + std::to_string(j), filename, 1);
    if (pos + 1 != header.size() || header[pos] != "y") throw ParseError("expected trailing y column", filename, 1);
    const std::size_t n_fields = header.size();

    std::vector<std::vector<double>> numeric;
    std::vector<int> ids;
    std::vector<std::vector<std::uint8_t>> flags;
    long line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        fields.push_back(cur);
        if (fields.size() != n_fields)
            throw ParseError("expected " + std::to_string(n_fields) + " fields, got " +
                                 std::to_string(fields.size()),
                             filename, line_no);
        try {
            std::size_t f = 0;
            ids.push_back(std::stoi(fields[f++]));
            std::vector<double> row;
            for (int j = 0; j < m + K; ++j) row.push_back(std::stod(fields[f++]));
            std::vector<std::uint8_t> flag_row;
            for (int j = 0; j < K; ++j) {
                const std::string& s = fields[f++];
                if (s != "0" && s != "1") throw ParseError("intervened flag must be 0 or 1", filename, line_no);
                flag_row.push_back(s == "1" ? 1 : 0);
            }
            row.push_back(std::stod(fields[f++]));
            numeric.push_back(std::move(row));
            flags.push_back(std::move(flag_row));
        } catch (const std::invalid_argument&) {
            throw ParseError("malformed numeric field", filename, line_no);
        } catch (const std::out_of_range&) {
            throw ParseError("numeric field out of range", filename, line_no);
        }
    }

    const long n = static_cast<long>(numeric.size());
    Dataset ds;
    ds.covariates.resize(n, m);
    ds.treatments.resize(n, K);
    ds.outcome.resize(n);
    ds.intervened.resize(n, K);
    ds.regime_id = ids;
    for (long r = 0; r < n; ++r) {
        for (int j = 0; j < m; ++j) ds.covariates(r, j) = numeric[r][j];
        for (int j = 0; j < K; ++j) ds.treatments(r, j) = numeric[r][m + j];
        for (int j = 0; j < K; ++j) ds.intervened(r, j) = flags[r][j];
        ds.outcome(r) = numeric[r][m + K];
    }

    // Rebuild the regime dictionary from ids + flags; value policies are not
    // part of the wire format.
    int max_id = -1;
    for (int id : ids) max_id = std::max(max_id, id);
    ds.regimes.assign(max_id + 1, Regime::observational());
    std::vector<bool> seen(max_id + 1, false);
    for (long r = 0; r < n; ++r) {
        const int id = ds.regime_id[r];
        if (id < 0) throw ParseError("negative regime id", filename, r + 2);
        std::vector<int> intervened;
        for (int j = 0; j < K; ++j)
            if (ds.intervened(r, j)) intervened.push_back(j);
        if (!seen[id]) {
            ds.regimes[id] = Regime::sampled(intervened);
            seen[id] = true;
        } else if (ds.regimes[id].intervened != intervened) {
            throw ParseError("regime id " + std::to_string(id) + " has inconsistent intervened flags", filename,
                             r + 2);
        }
    }
    ds.validate();
    return ds;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw Error("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json fit_report_to_json(const FitReport& report) {
    json theta = json::array();
    for (const auto& t : report.theta.treatments) theta.push_back(vector_to_json(t));
    theta.push_back(vector_to_json(report.theta.outcome));
    return {{"theta", theta},
            {"sigma", matrix_to_json_row_major(report.sigma.mat())},
            {"ll_trace", report.ll_trace},
            {"converged", report.converged},
            {"iterations", report.iterations}};
}

FitReport fit_report_from_json(const json& j) {
    FitReport report;
    const json& theta = j.at("theta");
    if (theta.empty()) throw Error("fit report json: empty theta");
    const int K = static_cast<int>(theta.size()) - 1;
    for (int k = 0; k < K; ++k) report.theta.treatments.push_back(vector_from_json(theta[k]));
    report.theta.outcome = vector_from_json(theta[K]);
    report.sigma = CovMatrix(matrix_from_json_row_major(j.at("sigma"), K + 1, K + 1));
    report.ll_trace = j.at("ll_trace").get<std::vector<double>>();
    report.converged = j.at("converged").get<bool>();
    report.iterations = j.at("iterations").get<int>();

    // Dimensional consistency: treatment and outcome bases must come from
    // the same covariate dimension.
    const int m = report.covariate_dim();
    if (K > 0 && report.theta.treatments[0].size() != PolyBasis{m}.dim())
        throw Error("fit report json: treatment theta length is not a valid basis dimension");
    if (report.theta.outcome.size() != PolyBasis{m + K}.dim())
        throw Error("fit report json: outcome theta length inconsistent with K and covariate_dim");
    return report;
}

json query_to_json(const Query& q) {
    json do_map = json::object(), obs_map = json::object();
    for (const auto& [idx, v] : q.intervened) do_map[std::to_string(idx)] = v;
    for (const auto& [idx, v] : q.observed) obs_map[std::to_string(idx)] = v;
    return {{"c", vector_to_json(q.c)}, {"do", do_map}, {"obs", obs_map}};
}

Query query_from_json(const json& j) {
    Query q;
    q.c = vector_from_json(j.at("c"));
    for (const auto& [key, v] : j.at("do").items()) q.intervened[std::stoi(key)] = v.get<double>();
    for (const auto& [key, v] : j.at("obs").items()) q.observed[std::stoi(key)] = v.get<double>();
    return q;
}

}  // namespace disentangle
