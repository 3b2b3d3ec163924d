#include "AgentDesigned.h"

#include <cstdint>
#include <exception>

namespace {

std::mt19937 g_engine;
uint64_t g_device_state = 0;
uint64_t g_fast_state = 1;

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

struct Context {
    Instance instance;
    Solution solution;
    std::vector<int> scratch;
    Context() : instance(), solution{instance, 0.0f, {}, {}} {}
};

int copy_out(const std::vector<int>& values, int* out, int cap) {
    int n = static_cast<int>(values.size());
    std::copy(values.begin(), values.begin() + std::min(n, cap), out);
    return n;
}

}  // namespace

unsigned int vrpa_detail::SeededDevice::operator()() {
    return static_cast<unsigned int>(splitmix64(g_device_state));
}

int getRandomNumber(int min, int max) {
    if (max < min) std::swap(min, max);
    std::uniform_int_distribution<int> dist(min, max);
    return dist(g_engine);
}

float getRandomFraction(float min, float max) {
    std::uniform_real_distribution<float> dist(min, max);
    return dist(g_engine);
}

float getRandomFractionFast() {
    g_fast_state ^= g_fast_state << 13;
    g_fast_state ^= g_fast_state >> 7;
    g_fast_state ^= g_fast_state << 17;
    return static_cast<float>(g_fast_state >> 40) * (1.0f / 16777215.0f);
}

std::vector<int> argsort(const std::vector<float>& values) {
    std::vector<int> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return values[a] < values[b]; });
    return idx;
}

extern "C" {

int vrpa_shim_version() { return 1; }

void* vrpa_create(int num_nodes, int capacity, const double* x, const double* y, const int* demand,
                  const double* tw_start, const double* tw_end, const double* service, const double* prize,
                  const int* adjacency, uint64_t seed) {
    try {
        uint64_t s = seed;
        g_engine.seed(static_cast<std::mt19937::result_type>(splitmix64(s)));
        g_device_state = splitmix64(s);
        g_fast_state = splitmix64(s) | 1;
        std::srand(static_cast<unsigned>(splitmix64(s)));

        Context* ctx = new Context();
        Instance& inst = ctx->instance;
        inst.numNodes = num_nodes;
        inst.numCustomers = num_nodes - 1;
        inst.vehicleCapacity = capacity;
        inst.demand.assign(demand, demand + num_nodes);
        inst.nodePositions.resize(num_nodes);
        inst.distanceMatrix.assign(num_nodes, std::vector<float>(num_nodes));
        inst.adj.resize(num_nodes);
        for (int i = 0; i < num_nodes; ++i) {
            inst.nodePositions[i] = {static_cast<float>(x[i]), static_cast<float>(y[i])};
            for (int j = 0; j < num_nodes; ++j) {
                inst.distanceMatrix[i][j] = static_cast<float>(std::hypot(x[i] - x[j], y[i] - y[j]));
            }
            const int* row = adjacency + static_cast<size_t>(i) * (num_nodes - 1);
            inst.adj[i].assign(row, row + num_nodes - 1);
        }
        inst.twStart.assign(tw_start, tw_start + num_nodes);
        inst.twEnd.assign(tw_end, tw_end + num_nodes);
        inst.serviceTime.assign(service, service + num_nodes);
        inst.prize.assign(prize, prize + num_nodes);
        ctx->solution.customerToTourMap.assign(num_nodes, -1);
        return ctx;
    } catch (...) {
        return nullptr;
    }
}

void vrpa_destroy(void* handle) { delete static_cast<Context*>(handle); }

// Returns the number of selected customers (possibly more than `cap`, in
// which case only the first `cap` are written) or -1 on an exception.
int vrpa_select(void* handle, int num_tours, const int* offsets, const int* customers, const int* tour_demand,
                const double* tour_cost, double total_cost, int* out, int cap) {
    try {
        Context* ctx = static_cast<Context*>(handle);
        Solution& sol = ctx->solution;
        sol.totalCosts = static_cast<float>(total_cost);
        sol.tours.resize(num_tours);
        std::fill(sol.customerToTourMap.begin(), sol.customerToTourMap.end(), -1);
        for (int t = 0; t < num_tours; ++t) {
            Tour& tour = sol.tours[t];
            tour.customers.assign(customers + offsets[t], customers + offsets[t + 1]);
            tour.demand = tour_demand[t];
            tour.costs = static_cast<float>(tour_cost[t]);
            for (int c : tour.customers) sol.customerToTourMap[c] = t;
        }
        return copy_out(select_by_llm_1(sol), out, cap);
    } catch (...) {
        return -1;
    }
}

// Orders `ids` in place semantics: the result is written to `out`.
int vrpa_sort(void* handle, const int* ids, int len, int* out, int cap) {
    try {
        Context* ctx = static_cast<Context*>(handle);
        ctx->scratch.assign(ids, ids + len);
        sort_by_llm_1(ctx->scratch, ctx->instance);
        return copy_out(ctx->scratch, out, cap);
    } catch (...) {
        return -1;
    }
}

}  // extern "C"
