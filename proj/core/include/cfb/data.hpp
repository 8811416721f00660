#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfb/scm.hpp"

namespace cfb {

struct Record {
    Arm a = Arm::a0;
    double y = 0.0;
};

struct Dataset {
    std::vector<Record> records;

    std::vector<double> outcomes(Arm arm) const;
    std::size_t count(Arm arm) const;
};

// Sorted sample with the usual step-function estimators attached.
struct EmpiricalDist {
    std::vector<double> values;  // ascending

    Interval support_estimate() const {
        return values.empty() ? Interval{0.0, 0.0} : Interval{values.front(), values.back()};
    }
};

EmpiricalDist make_empirical(std::vector<double> sample);

// right-continuous empirical CDF: fraction of the sample <= y
double ecdf(const EmpiricalDist& d, double y);

// left-continuous generalized inverse (type-1); q = 0 maps to the minimum
double quantile(const EmpiricalDist& d, double q);

// first Wasserstein distance between two empirical distributions; equal sizes
// reduce to the mean absolute difference of sorted samples, unequal sizes use
// the piecewise-constant quantile coupling
double wasserstein1(const EmpiricalDist& a, const EmpiricalDist& b);

enum class DatasetKind { dataset1 = 1, dataset2 = 2 };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::dataset1;
    std::size_t n_per_arm = 1000;
    std::uint64_t seed = 0;
};

// Dataset 1: both arms standard normal.
// Dataset 2: arm 0 is a two-component normal mixture, arm 1 a three-component
// one (means 0.10 and 0.05 respectively).
Dataset generate(const DatasetSpec& spec);

// CSV with header "a,y"; doubles written with 17 significant digits. A
// nonempty comment is emitted first as a "# ..." line; readers skip such lines.
void write_csv(const Dataset& d, const std::string& path,
               const std::string& comment = "");
Dataset read_csv(const std::string& path);

}  // namespace cfb
