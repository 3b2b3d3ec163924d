#pragma once
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "Instance.h"
#include "Solution.h"
#include "Tour.h"
#include "Utils.h"

// Candidates seed their engines from std::random_device. Evaluation must be
// reproducible, so the device is replaced by one drawing from the run seed.
namespace vrpa_detail {
struct SeededDevice {
    using result_type = unsigned int;
    SeededDevice() {}
    explicit SeededDevice(const std::string&) {}
    result_type operator()();
    double entropy() const noexcept { return 0.0; }
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~0u; }
};
}  // namespace vrpa_detail

namespace std {
using vrpa_seeded_device = ::vrpa_detail::SeededDevice;
}
#define random_device vrpa_seeded_device

std::vector<int> select_by_llm_1(const Solution& sol);
void sort_by_llm_1(std::vector<int>& customers, const Instance& instance);
