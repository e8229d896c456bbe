#pragma once

// Flop counts worked out by hand (Python fractions) from the printed formulas
// at five dimension tuples (d, m, p, n, F, H).

#include <utility>
#include <vector>

#include "sysid/experiments.hpp"

namespace oracle {

inline const std::vector<sysid::FlopDims> kFlopDims = {
    {1, 1, 1, 1, 0, 0}, {2, 2, 6, 40, 10, 4}, {3, 1, 7, 100, 25, 3}, {2, 2, 23, 2000, 50, 8}, {82, 2, 3, 30, 1000, 200}};

using sysid::FlopAlgorithm;
using sysid::Rational;

inline const std::vector<std::pair<FlopAlgorithm, std::vector<Rational>>> kFlopTable = {
    {FlopAlgorithm::KFPredict, {Rational(4, 1), Rational(34, 1), Rational(114, 1), Rational(34, 1), Rational(2212114, 1)}},
    {FlopAlgorithm::KFUpdate, {Rational(37, 3), Rational(305, 3), Rational(355, 3), Rational(305, 3), Rational(3535505, 3)}},
    {FlopAlgorithm::KFTotal, {Rational(31, 1), Rational(6560, 1), Rational(24700, 1), Rational(328000, 1), Rational(101719320, 1)}},
    {FlopAlgorithm::UKFPredict, {Rational(82, 3), Rational(488, 3), Rational(459, 1), Rational(1088, 3), Rational(8006698, 3)}},
    {FlopAlgorithm::UKFUpdate, {Rational(152, 3), Rational(778, 3), Rational(739, 3), Rational(838, 3), Rational(362946, 1)}},
    {FlopAlgorithm::UKFTotal, {Rational(332, 3), Rational(54094, 3), Rational(72018, 1), Rational(4022054, 3), Rational(90956228, 1)}},
    {FlopAlgorithm::DMD, {Rational(-2, 3), Rational(1892, 3), Rational(1186, 3), Rational(95972, 3), Rational(1412, 3)}},
    {FlopAlgorithm::SparseRegression,
     {Rational(-5, 3), Rational(1749, 1), Rational(60466, 3), Rational(27042917, 24), Rational(3099, 8)}},
};

}  // namespace oracle
