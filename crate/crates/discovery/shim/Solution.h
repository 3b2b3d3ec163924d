#pragma once
#include <vector>
#include "Instance.h"
#include "Tour.h"

struct Solution {
    const Instance& instance; // Reference to the instance to avoid copying
    float totalCosts; // Total cost of the solution
    std::vector<Tour> tours; // List of tours in the solution
    std::vector<int> customerToTourMap; // Map from each customer to its tour index, -1 if unvisited
};
