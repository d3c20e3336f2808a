#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace uktl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense M-mode tensor. Values are stored flat in row-major order
/// (last index varies fastest). Immutable by convention once built.
struct Tensor {
    std::vector<int> dims;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(std::vector<int> dims_, double fill = 0.0);
    Tensor(std::vector<int> dims_, std::vector<double> values_);

    int order() const { return static_cast<int>(dims.size()); }
    std::int64_t numel() const;

    double& at(const std::vector<int>& idx);
    double at(const std::vector<int>& idx) const;

    Tensor& operator+=(const Tensor& o);
    Tensor& operator-=(const Tensor& o);
    Tensor& operator*=(double a);

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }

    bool operator==(const Tensor& o) const {
        return dims == o.dims && values == o.values;
    }
};

std::int64_t checked_numel(const std::vector<int>& dims);

bool all_finite(const Tensor& t);

/// Mode-m unfolding, m in [0, order). Rows index mode m; the column index
/// enumerates the remaining modes with the lowest remaining mode varying
/// fastest (Kolda convention).
Matrix matricize(const Tensor& t, int mode);

/// Inverse of matricize for the given dims/mode. Bit-exact round trip.
Tensor refold(const Matrix& m, const std::vector<int>& dims, int mode);

double frobenius_norm(const Tensor& t);
double frobenius_distance_sq(const Tensor& a, const Tensor& b);

// TNS v1 text format:
//   TNS v1
//   order <M>
//   dims <I_1> ... <I_M>
//   <values, row-major, shortest round-trip decimals>
std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view text);

void write_tns(const Tensor& t, const std::filesystem::path& path);
Tensor read_tns(const std::filesystem::path& path);

/// Shortest decimal string that round-trips the double bit-exactly.
std::string format_double(double v);

}  // namespace uktl
