#pragma once

#include <array>
#include <cmath>

namespace iotfp {

// Upper 5% points of the chi-squared distribution, df = 1..200.
inline constexpr std::array<double, 200> kChiSquared95 = {
    3.8415, 5.9915, 7.8147, 9.4877, 11.0705, 12.5916,
    14.0671, 15.5073, 16.9190, 18.3070, 19.6751, 21.0261,
    22.3620, 23.6848, 24.9958, 26.2962, 27.5871, 28.8693,
    30.1435, 31.4104, 32.6706, 33.9244, 35.1725, 36.4150,
    37.6525, 38.8851, 40.1133, 41.3371, 42.5570, 43.7730,
    44.9853, 46.1943, 47.3999, 48.6024, 49.8018, 50.9985,
    52.1923, 53.3835, 54.5722, 55.7585, 56.9424, 58.1240,
    59.3035, 60.4809, 61.6562, 62.8296, 64.0011, 65.1708,
    66.3386, 67.5048, 68.6693, 69.8322, 70.9935, 72.1532,
    73.3115, 74.4683, 75.6237, 76.7778, 77.9305, 79.0819,
    80.2321, 81.3810, 82.5287, 83.6753, 84.8206, 85.9649,
    87.1081, 88.2502, 89.3912, 90.5312, 91.6702, 92.8083,
    93.9453, 95.0815, 96.2167, 97.3510, 98.4844, 99.6169,
    100.7486, 101.8795, 103.0095, 104.1387, 105.2672, 106.3948,
    107.5217, 108.6479, 109.7733, 110.8980, 112.0220, 113.1453,
    114.2679, 115.3898, 116.5110, 117.6317, 118.7516, 119.8709,
    120.9896, 122.1077, 123.2252, 124.3421, 125.4584, 126.5741,
    127.6893, 128.8039, 129.9180, 131.0315, 132.1444, 133.2569,
    134.3688, 135.4802, 136.5911, 137.7015, 138.8114, 139.9208,
    141.0297, 142.1382, 143.2461, 144.3537, 145.4607, 146.5674,
    147.6735, 148.7793, 149.8846, 150.9894, 152.0939, 153.1979,
    154.3015, 155.4047, 156.5075, 157.6099, 158.7119, 159.8135,
    160.9148, 162.0156, 163.1161, 164.2162, 165.3159, 166.4153,
    167.5143, 168.6130, 169.7113, 170.8092, 171.9068, 173.0041,
    174.1010, 175.1976, 176.2938, 177.3897, 178.4854, 179.5806,
    180.6756, 181.7702, 182.8646, 183.9586, 185.0523, 186.1458,
    187.2389, 188.3317, 189.4242, 190.5165, 191.6084, 192.7001,
    193.7914, 194.8825, 195.9734, 197.0639, 198.1542, 199.2442,
    200.3339, 201.4234, 202.5126, 203.6015, 204.6902, 205.7786,
    206.8668, 207.9547, 209.0424, 210.1298, 211.2170, 212.3039,
    213.3906, 214.4771, 215.5633, 216.6492, 217.7350, 218.8205,
    219.9058, 220.9908, 222.0756, 223.1602, 224.2446, 225.3288,
    226.4127, 227.4964, 228.5799, 229.6632, 230.7463, 231.8292,
    232.9118, 233.9943,
};

// Wilson-Hilferty cube approximation, used past the end of the table.
inline double wilson_hilferty_95(int df) {
    constexpr double z = 1.6448536269514722;
    const double k = static_cast<double>(df);
    const double a = 2.0 / (9.0 * k);
    const double c = 1.0 - a + z * std::sqrt(a);
    return k * c * c * c;
}

inline double chi_squared_critical_95(int df) {
    if (df >= 1 && df <= static_cast<int>(kChiSquared95.size())) return kChiSquared95[static_cast<std::size_t>(df - 1)];
    return wilson_hilferty_95(df);
}

} // namespace iotfp
