#include "confreg/conformal.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "confreg/errors.hpp"
#include "confreg/rng.hpp"

namespace confreg::conformal {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

void LabelledDataset::validate() const {
    require(inputs.cols >= 1, "labelled dataset: d must be at least 1");
    require(inputs.rows >= 1, "labelled dataset: at least one row required");
    require(inputs.rows == outputs.size(), "labelled dataset: row count mismatch");
    require(inputs.data.size() == inputs.rows * inputs.cols, "labelled dataset: malformed matrix");
    require(all_finite(inputs.data) && all_finite(outputs),
            "labelled dataset: non-finite entries");
}

void UnlabelledDataset::validate() const {
    require(inputs.cols >= 1, "unlabelled dataset: d must be at least 1");
    require(inputs.rows >= 1, "unlabelled dataset: at least one row required");
    require(inputs.data.size() == inputs.rows * inputs.cols, "unlabelled dataset: malformed matrix");
    require(all_finite(inputs.data), "unlabelled dataset: non-finite entries");
}

Vector fit_least_squares(const LabelledDataset& data, bool intercept) {
    data.validate();
    const long n = long(data.inputs.rows);
    const long d = long(data.inputs.cols);
    const long cols = d + (intercept ? 1 : 0);
    require(n >= cols, "fit_least_squares: more columns than rows");

    Eigen::MatrixXd A(n, cols);
    A.leftCols(d) = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                   Eigen::RowMajor>>(data.inputs.data.data(), n, d);
    if (intercept) A.col(d).setOnes();
    Eigen::Map<const Eigen::VectorXd> b(data.outputs.data(), n);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    long rank = qr.rank();
    if (rank < cols) {
        long deficient = cols - rank;
        throw SingularDesignError(
            "fit_least_squares: design matrix is rank deficient", deficient);
    }
    Eigen::VectorXd coef = qr.solve(b);
    return Vector(coef.data(), coef.data() + cols);
}

long quantile_rank(double alpha, long n_cal) {
    require(alpha > 0.0 && alpha < 1.0, "quantile_rank: alpha must lie in (0,1)");
    require(n_cal >= 1, "quantile_rank: empty calibration set");
    // long double product with a downward nudge: keeps exact integers (e.g.
    // 0.9 * 10) from ceiling one step too high through representation error
    long double t = (1.0L - (long double)alpha) * (long double)(n_cal + 1);
    long rank = (long)std::ceil((double)(t - 1e-12L));
    if (rank < 1) rank = 1;
    if (rank > n_cal) {
        long double m = (1.0L - (long double)alpha) / (long double)alpha;
        long minimal = (long)std::ceil((double)(m - 1e-12L));
        throw InfeasibleQuantileError(
            "quantile_rank: calibration set too small for requested alpha", minimal);
    }
    return rank;
}

SplitCalibration split_calibrate(const LabelledDataset& data, double alpha,
                                 double split_fraction, std::uint64_t seed, bool intercept) {
    data.validate();
    require(alpha > 0.0 && alpha < 1.0, "split_calibrate: alpha must lie in (0,1)");
    require(split_fraction > 0.0 && split_fraction < 1.0,
            "split_calibrate: split_fraction must lie in (0,1)");
    const long n = long(data.inputs.rows);
    const long d = long(data.inputs.cols);
    const long n_train = (long)std::floor(split_fraction * double(n) + 1e-9);
    const long n_cal = n - n_train;
    require(n_train >= 1 && n_cal >= 1, "split_calibrate: both splits must be nonempty");

    std::vector<long> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0L);
    SplitMix64 rng(seed);
    for (long i = n - 1; i >= 1; --i)
        std::swap(order[std::size_t(i)], order[std::size_t(rng.next_below(std::uint64_t(i + 1)))]);

    LabelledDataset train;
    train.inputs = Matrix(std::size_t(n_train), std::size_t(d));
    train.outputs.resize(std::size_t(n_train));
    for (long i = 0; i < n_train; ++i) {
        auto src = data.inputs.row(std::size_t(order[std::size_t(i)]));
        std::copy(src.begin(), src.end(), train.inputs.row(std::size_t(i)).begin());
        train.outputs[std::size_t(i)] = data.outputs[std::size_t(order[std::size_t(i)])];
    }

    SplitCalibration cal;
    cal.intercept = intercept;
    cal.alpha = alpha;
    cal.predictor = fit_least_squares(train, intercept);

    cal.calibration_scores.resize(std::size_t(n_cal));
    for (long i = 0; i < n_cal; ++i) {
        long row = order[std::size_t(n_train + i)];
        double fit = predict_value(cal, data.inputs.row(std::size_t(row)));
        cal.calibration_scores[std::size_t(i)] =
            std::fabs(data.outputs[std::size_t(row)] - fit);
    }
    std::sort(cal.calibration_scores.begin(), cal.calibration_scores.end());

    long rank = quantile_rank(alpha, n_cal);
    cal.quantile_radius = cal.calibration_scores[std::size_t(rank - 1)];
    return cal;
}

double predict_value(const SplitCalibration& cal, std::span<const double> x) {
    require(long(x.size()) == cal.d(), "predict: input dimension mismatch");
    double v = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) v += cal.predictor[j] * x[j];
    if (cal.intercept) v += cal.predictor.back();
    return v;
}

PredictionInterval predict_interval(const SplitCalibration& cal, std::span<const double> x) {
    double center = predict_value(cal, x);
    return PredictionInterval{center - cal.quantile_radius, center + cal.quantile_radius};
}

std::vector<PredictionInterval> intervals_for(const SplitCalibration& cal,
                                              const UnlabelledDataset& data) {
    data.validate();
    std::vector<PredictionInterval> out;
    out.reserve(data.inputs.rows);
    for (std::size_t i = 0; i < data.inputs.rows; ++i)
        out.push_back(predict_interval(cal, data.inputs.row(i)));
    return out;
}

namespace {

std::vector<std::vector<double>> read_csv_rows(std::istream& in, std::size_t& ncols) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("csv: missing header row");
    ncols = std::size_t(std::count(line.begin(), line.end(), ',')) + 1;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            std::string tok = line.substr(start, comma == std::string::npos ? comma : comma - start);
            double v = 0.0;
            auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
                throw std::invalid_argument("csv: bad numeric field '" + tok + "'");
            row.push_back(v);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (row.size() != ncols) throw std::invalid_argument("csv: ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::invalid_argument("csv: no data rows");
    return rows;
}

}  // namespace

LabelledDataset read_labelled_csv(std::istream& in) {
    std::size_t ncols = 0;
    auto rows = read_csv_rows(in, ncols);
    if (ncols < 2) throw std::invalid_argument("csv: labelled data needs at least two columns");
    LabelledDataset data;
    data.inputs = Matrix(rows.size(), ncols - 1);
    data.outputs.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(rows[i].begin(), rows[i].end() - 1, data.inputs.row(i).begin());
        data.outputs[i] = rows[i].back();
    }
    data.validate();
    return data;
}

UnlabelledDataset read_unlabelled_csv(std::istream& in) {
    std::size_t ncols = 0;
    auto rows = read_csv_rows(in, ncols);
    UnlabelledDataset data;
    data.inputs = Matrix(rows.size(), ncols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), data.inputs.row(i).begin());
    data.validate();
    return data;
}

void write_labelled_csv(std::ostream& out, const LabelledDataset& data) {
    data.validate();
    for (std::size_t j = 0; j < data.inputs.cols; ++j) out << 'x' << j << ',';
    out << "y\n";
    for (std::size_t i = 0; i < data.inputs.rows; ++i) {
        for (std::size_t j = 0; j < data.inputs.cols; ++j)
            out << format_double(data.inputs(i, j)) << ',';
        out << format_double(data.outputs[i]) << '\n';
    }
}

void write_unlabelled_csv(std::ostream& out, const UnlabelledDataset& data) {
    data.validate();
    for (std::size_t j = 0; j < data.inputs.cols; ++j)
        out << 'x' << j << (j + 1 == data.inputs.cols ? '\n' : ',');
    for (std::size_t i = 0; i < data.inputs.rows; ++i)
        for (std::size_t j = 0; j < data.inputs.cols; ++j)
            out << format_double(data.inputs(i, j)) << (j + 1 == data.inputs.cols ? '\n' : ',');
}

}  // namespace confreg::conformal
