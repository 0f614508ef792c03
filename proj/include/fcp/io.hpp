#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fcp/errors.hpp"
#include "fcp/lla.hpp"
#include "fcp/model.hpp"
#include "fcp/types.hpp"

namespace fcp {

// Malformed text input; line and column are 1-based (0 when not applicable).
class ParseError : public ValidationError {
public:
    ParseError(const std::string& source, long line, long column, const std::string& msg)
        : ValidationError(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
          line_(line), column_(column) {}

    long line() const noexcept { return line_; }
    long column() const noexcept { return column_; }

private:
    long line_;
    long column_;
};

// Dataset file:
//   # kind=<linear|logistic|quantile:tau|precision> n=<n> p=<p>
//   n data rows, comma separated.
// Vector kinds store `y,x_1,...,x_p` per row; precision stores the p
// coordinates of one observation per row.
struct Dataset {
    LossKind kind = LossKind::Linear;
    double tau = 0.5;
    Matrix x;  // n x p (observations for precision)
    Vector y;  // empty for precision

    Index n() const { return x.rows(); }
    Index p() const { return x.cols(); }

    Problem problem() const {
        switch (kind) {
            case LossKind::Linear: return Problem::linear(x, y);
            case LossKind::Logistic: return Problem::logistic(x, y);
            case LossKind::Quantile: return Problem::quantile(x, y, tau);
            case LossKind::Precision: return Problem::precision(sample_covariance(x), x.rows());
        }
        throw ValidationError("unknown dataset kind");
    }
};

inline std::string format_exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(const std::string& text) {
    const std::string t = trim(text);
    if (t.empty()) return std::nullopt;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline long parse_positive(const std::string& source, long line, long col, const std::string& key,
                           const std::string& value) {
    char* end = nullptr;
    const long v = std::strtol(value.c_str(), &end, 10);
    if (value.empty() || *end != '\0' || v <= 0)
        throw ParseError(source, line, col, key + " must be a positive integer, got '" + value + "'");
    return v;
}

// Splits a row on commas, recording the 1-based column where each field starts.
inline std::vector<std::pair<std::string, long>> split_row(const std::string& line) {
    std::vector<std::pair<std::string, long>> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma - start), static_cast<long>(start) + 1);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace detail

inline Dataset read_dataset(std::istream& in, const std::string& source = "<dataset>") {
    std::string line;
    long lineno = 0;
    // header
    while (std::getline(in, line)) {
        ++lineno;
        if (!detail::trim(line).empty()) break;
    }
    if (lineno == 0 || detail::trim(line).empty()) throw ParseError(source, lineno, 1, "empty dataset file");
    const std::string head = detail::trim(line);
    if (head.rfind('#', 0) != 0) throw ParseError(source, lineno, 1, "expected header '# kind=... n=... p=...'");
    Dataset ds;
    std::optional<long> n, p;
    bool have_kind = false;
    {
        std::istringstream hs(head.substr(1));
        std::string tok;
        while (hs >> tok) {
            const long col = static_cast<long>(line.find(tok)) + 1;
            const auto eq = tok.find('=');
            if (eq == std::string::npos) throw ParseError(source, lineno, col, "header token '" + tok + "' lacks '='");
            const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
            if (key == "kind") {
                have_kind = true;
                if (value == "linear") ds.kind = LossKind::Linear;
                else if (value == "logistic") ds.kind = LossKind::Logistic;
                else if (value == "precision") ds.kind = LossKind::Precision;
                else if (value.rfind("quantile:", 0) == 0) {
                    ds.kind = LossKind::Quantile;
                    const auto t = detail::parse_double(value.substr(9));
                    if (!t || !(*t > 0.0 && *t < 1.0))
                        throw ParseError(source, lineno, col, "quantile level must lie in (0,1)");
                    ds.tau = *t;
                } else {
                    throw ParseError(source, lineno, col, "unknown kind '" + value + "'");
                }
            } else if (key == "n") {
                n = detail::parse_positive(source, lineno, col, key, value);
            } else if (key == "p") {
                p = detail::parse_positive(source, lineno, col, key, value);
            } else {
                throw ParseError(source, lineno, col, "unknown header key '" + key + "'");
            }
        }
    }
    if (!have_kind || !n || !p) throw ParseError(source, lineno, 1, "header needs kind, n and p");
    const bool vec = ds.kind != LossKind::Precision;
    const long width = *p + (vec ? 1 : 0);
    ds.x.resize(*n, *p);
    if (vec) ds.y.resize(*n);
    long row = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        if (row >= *n) throw ParseError(source, lineno, 1, "more data rows than n=" + std::to_string(*n));
        const auto fields = detail::split_row(line);
        if (static_cast<long>(fields.size()) != width)
            throw ParseError(source, lineno, 1,
                             "expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()));
        for (long j = 0; j < width; ++j) {
            const auto& [text, col] = fields[static_cast<std::size_t>(j)];
            const auto v = detail::parse_double(text);
            if (!v) throw ParseError(source, lineno, col, "not a finite number: '" + detail::trim(text) + "'");
            if (vec && j == 0) {
                if (ds.kind == LossKind::Logistic && *v != 0.0 && *v != 1.0)
                    throw ParseError(source, lineno, col, "logistic response must be 0 or 1");
                ds.y[row] = *v;
            } else {
                ds.x(row, vec ? j - 1 : j) = *v;
            }
        }
        ++row;
    }
    if (row != *n)
        throw ParseError(source, lineno, 0, "found " + std::to_string(row) + " data rows, header says n=" +
                                                std::to_string(*n));
    return ds;
}

inline Dataset read_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset '" + path + "'");
    return read_dataset(in, path);
}

inline void write_dataset(std::ostream& os, const Dataset& ds) {
    os << "# kind=";
    switch (ds.kind) {
        case LossKind::Linear: os << "linear"; break;
        case LossKind::Logistic: os << "logistic"; break;
        case LossKind::Quantile: os << "quantile:" << format_exact(ds.tau); break;
        case LossKind::Precision: os << "precision"; break;
    }
    os << " n=" << ds.n() << " p=" << ds.p() << '\n';
    const bool vec = ds.kind != LossKind::Precision;
    for (Index i = 0; i < ds.n(); ++i) {
        if (vec) os << format_exact(ds.y[i]);
        for (Index j = 0; j < ds.p(); ++j) {
            if (vec || j > 0) os << ',';
            os << format_exact(ds.x(i, j));
        }
        os << '\n';
    }
}

// Estimate file: `index,value` (1-based) for vectors, `row,col,value` for
// matrices, every entry listed.
inline void write_estimate_csv(std::ostream& os, const Estimate& est) {
    if (est.is_matrix()) {
        const Matrix& m = est.matrix();
        os << "row,col,value\n";
        for (Index j = 0; j < m.rows(); ++j)
            for (Index k = 0; k < m.cols(); ++k) os << j + 1 << ',' << k + 1 << ',' << format_exact(m(j, k)) << '\n';
        return;
    }
    os << "index,value\n";
    const Vector& v = est.vector();
    for (Index j = 0; j < v.size(); ++j) os << j + 1 << ',' << format_exact(v[j]) << '\n';
}

inline Estimate read_estimate_csv(std::istream& in, const std::string& source = "<estimate>") {
    std::string line;
    long lineno = 0;
    if (!std::getline(in, line)) throw ParseError(source, 1, 1, "empty estimate file");
    ++lineno;
    const std::string head = detail::trim(line);
    const bool matrix = head == "row,col,value";
    if (!matrix && head != "index,value") throw ParseError(source, 1, 1, "unknown estimate header '" + head + "'");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_row(line);
        if (fields.size() != (matrix ? 3u : 2u)) throw ParseError(source, lineno, 1, "wrong number of fields");
        std::vector<double> r;
        for (const auto& [text, col] : fields) {
            const auto v = detail::parse_double(text);
            if (!v) throw ParseError(source, lineno, col, "not a finite number: '" + detail::trim(text) + "'");
            r.push_back(*v);
        }
        rows.push_back(std::move(r));
    }
    if (!matrix) {
        Vector v(static_cast<Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i][0] != static_cast<double>(i + 1)) throw ParseError(source, static_cast<long>(i) + 2, 1, "indices must run 1..p in order");
            v[static_cast<Index>(i)] = rows[i][1];
        }
        return Estimate(std::move(v));
    }
    const Index q = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(rows.size()))));
    if (q * q != static_cast<Index>(rows.size())) throw ParseError(source, lineno, 0, "matrix estimate is not square");
    Matrix m(q, q);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Index j = static_cast<Index>(i) / q, k = static_cast<Index>(i) % q;
        if (rows[i][0] != static_cast<double>(j + 1) || rows[i][1] != static_cast<double>(k + 1))
            throw ParseError(source, static_cast<long>(i) + 2, 1, "entries must be listed row-major");
        m(j, k) = rows[i][2];
    }
    return Estimate(std::move(m));
}

inline Estimate read_estimate_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open estimate '" + path + "'");
    return read_estimate_csv(in, path);
}

// One row per LLA iterate, iteration 0 being the initial estimate.
inline void write_trace_csv(std::ostream& os, const LlaTrace& tr) {
    os << "iteration,objective,nonzeros,max_change,solver_iterations,solver_residual\n";
    for (std::size_t m = 0; m < tr.iterates.size(); ++m) {
        const double obj = tr.objectives[m];
        os << m << ',' << (std::isinf(obj) ? std::string("Inf") : format_exact(obj)) << ','
           << tr.iterates[m].support().size() << ',' << format_exact(tr.max_change[m]) << ','
           << tr.solver[m].iterations << ',' << format_exact(tr.solver[m].residual) << '\n';
    }
}

}  // namespace fcp
