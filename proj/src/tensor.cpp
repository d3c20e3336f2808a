#include "uktl/tensor.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uktl {

std::int64_t checked_numel(const std::vector<int>& dims) {
    if (dims.empty()) {
        throw std::invalid_argument("tensor order must be >= 1");
    }
    std::int64_t n = 1;
    for (int d : dims) {
        if (d <= 0) {
            throw std::invalid_argument("tensor dims must be positive");
        }
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> dims_, double fill)
    : dims(std::move(dims_)), values(static_cast<size_t>(checked_numel(dims)), fill) {}

Tensor::Tensor(std::vector<int> dims_, std::vector<double> values_)
    : dims(std::move(dims_)), values(std::move(values_)) {
    if (checked_numel(dims) != static_cast<std::int64_t>(values.size())) {
        throw std::invalid_argument("tensor value count does not match dims");
    }
}

std::int64_t Tensor::numel() const {
    return static_cast<std::int64_t>(values.size());
}

static std::int64_t flat_index(const std::vector<int>& dims, const std::vector<int>& idx) {
    if (idx.size() != dims.size()) {
        throw std::invalid_argument("index order mismatch");
    }
    std::int64_t f = 0;
    for (size_t k = 0; k < dims.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= dims[k]) {
            throw std::out_of_range("tensor index out of range");
        }
        f = f * dims[k] + idx[k];
    }
    return f;
}

double& Tensor::at(const std::vector<int>& idx) {
    return values[static_cast<size_t>(flat_index(dims, idx))];
}

double Tensor::at(const std::vector<int>& idx) const {
    return values[static_cast<size_t>(flat_index(dims, idx))];
}

static void check_same_dims(const Tensor& a, const Tensor& b) {
    if (a.dims != b.dims) {
        throw std::invalid_argument("tensor dims mismatch");
    }
}

Tensor& Tensor::operator+=(const Tensor& o) {
    check_same_dims(*this, o);
    for (size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
    check_same_dims(*this, o);
    for (size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
    return *this;
}

Tensor& Tensor::operator*=(double a) {
    for (double& v : values) v *= a;
    return *this;
}

bool all_finite(const Tensor& t) {
    for (double v : t.values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix matricize(const Tensor& t, int mode) {
    const int M = t.order();
    if (mode < 0 || mode >= M) {
        throw std::out_of_range("matricize: mode index out of range");
    }
    const std::int64_t rows = t.dims[mode];
    const std::int64_t cols = t.numel() / rows;
    Matrix out(rows, cols);

    // Column strides: lowest remaining mode varies fastest.
    std::vector<std::int64_t> cstride(M, 0);
    std::int64_t s = 1;
    for (int k = 0; k < M; ++k) {
        if (k == mode) continue;
        cstride[k] = s;
        s *= t.dims[k];
    }

    std::vector<int> idx(M, 0);
    for (std::int64_t f = 0; f < t.numel(); ++f) {
        std::int64_t col = 0;
        for (int k = 0; k < M; ++k) {
            if (k != mode) col += idx[k] * cstride[k];
        }
        out(idx[mode], col) = t.values[static_cast<size_t>(f)];
        // advance row-major multi-index (last mode fastest)
        for (int k = M - 1; k >= 0; --k) {
            if (++idx[k] < t.dims[k]) break;
            idx[k] = 0;
        }
    }
    return out;
}

Tensor refold(const Matrix& m, const std::vector<int>& dims, int mode) {
    const int M = static_cast<int>(dims.size());
    if (mode < 0 || mode >= M) {
        throw std::out_of_range("refold: mode index out of range");
    }
    const std::int64_t n = checked_numel(dims);
    if (m.rows() != dims[mode] || m.rows() * m.cols() != n) {
        throw std::invalid_argument("refold: matrix shape does not match dims");
    }
    Tensor out(dims);

    std::vector<std::int64_t> cstride(M, 0);
    std::int64_t s = 1;
    for (int k = 0; k < M; ++k) {
        if (k == mode) continue;
        cstride[k] = s;
        s *= dims[k];
    }

    std::vector<int> idx(M, 0);
    for (std::int64_t f = 0; f < n; ++f) {
        std::int64_t col = 0;
        for (int k = 0; k < M; ++k) {
            if (k != mode) col += idx[k] * cstride[k];
        }
        out.values[static_cast<size_t>(f)] = m(idx[mode], col);
        for (int k = M - 1; k >= 0; --k) {
            if (++idx[k] < dims[k]) break;
            idx[k] = 0;
        }
    }
    return out;
}

double frobenius_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values) s += v * v;
    return std::sqrt(s);
}

double frobenius_distance_sq(const Tensor& a, const Tensor& b) {
    check_same_dims(a, b);
    double s = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        s += d * d;
    }
    return s;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string encode_tensor(const Tensor& t) {
    std::string out;
    out += "TNS v1\n";
    out += "order " + std::to_string(t.order()) + "\n";
    out += "dims";
    for (int d : t.dims) out += " " + std::to_string(d);
    out += "\n";
    // One line per run of the last mode.
    const int last = t.dims.back();
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        out += format_double(t.values[static_cast<size_t>(i)]);
        out += ((i + 1) % last == 0) ? '\n' : ' ';
    }
    return out;
}

namespace {

struct TextCursor {
    std::string_view text;
    size_t pos = 0;
    int line = 1;
    int col = 1;

    [[noreturn]] void fail(const std::string& msg) const {
        std::ostringstream os;
        os << "TNS parse error at line " << line << ", column " << col << ": " << msg;
        throw std::runtime_error(os.str());
    }

    void advance(size_t n) {
        for (size_t i = 0; i < n && pos < text.size(); ++i, ++pos) {
            if (text[pos] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    }

    void skip_space() {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' ||
                                     text[pos] == '\r' || text[pos] == '\n')) {
            advance(1);
        }
    }

    bool at_end() {
        skip_space();
        return pos >= text.size();
    }

    std::string_view next_token() {
        skip_space();
        size_t start = pos;
        while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) {
            advance(1);
        }
        return text.substr(start, pos - start);
    }

    void expect_line(std::string_view want, const char* what) {
        size_t eol = text.find('\n', pos);
        std::string_view got = text.substr(pos, (eol == std::string_view::npos ? text.size() : eol) - pos);
        while (!got.empty() && got.back() == '\r') got.remove_suffix(1);
        if (got != want) {
            fail(std::string("malformed header, expected '") + std::string(want) + "' for " + what);
        }
        advance(got.size());
        if (pos < text.size()) advance(1);  // newline
    }
};

long parse_int_token(TextCursor& cur, const char* what) {
    auto save_line = cur.line;
    auto save_col = cur.col;
    std::string_view tok = cur.next_token();
    long v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || p != tok.data() + tok.size()) {
        cur.line = save_line;
        cur.col = save_col;
        cur.fail(std::string("expected integer for ") + what + ", got '" + std::string(tok) + "'");
    }
    return v;
}

}  // namespace

Tensor decode_tensor(std::string_view text) {
    TextCursor cur{text};
    cur.expect_line("TNS v1", "magic");

    cur.skip_space();
    {
        auto save = cur;
        std::string_view kw = cur.next_token();
        if (kw != "order") {
            cur = save;
            cur.fail("expected 'order'");
        }
    }
    long order = parse_int_token(cur, "order");
    if (order < 1) cur.fail("order must be >= 1");

    cur.skip_space();
    {
        auto save = cur;
        std::string_view kw = cur.next_token();
        if (kw != "dims") {
            cur = save;
            cur.fail("expected 'dims'");
        }
    }
    std::vector<int> dims;
    dims.reserve(static_cast<size_t>(order));
    for (long i = 0; i < order; ++i) {
        long d = parse_int_token(cur, "dim");
        if (d < 1) cur.fail("dims must be positive");
        dims.push_back(static_cast<int>(d));
    }
    const std::int64_t n = checked_numel(dims);

    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        if (cur.at_end()) {
            std::ostringstream os;
            os << "value-count mismatch: expected " << n << " values, got " << i;
            cur.fail(os.str());
        }
        auto save_line = cur.line;
        auto save_col = cur.col;
        std::string_view tok = cur.next_token();
        double v = 0.0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size()) {
            cur.line = save_line;
            cur.col = save_col;
            cur.fail("non-numeric value token '" + std::string(tok) + "'");
        }
        if (!std::isfinite(v)) {
            cur.line = save_line;
            cur.col = save_col;
            cur.fail("non-finite value '" + std::string(tok) + "'");
        }
        vals.push_back(v);
    }
    if (!cur.at_end()) {
        std::ostringstream os;
        os << "value-count mismatch: expected " << n << " values, found extra data";
        cur.fail(os.str());
    }
    return Tensor(std::move(dims), std::move(vals));
}

void write_tns(const Tensor& t, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    f << encode_tensor(t);
    if (!f) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

Tensor read_tns(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open for reading: " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    try {
        return decode_tensor(ss.str());
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace uktl
