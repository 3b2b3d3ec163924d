#pragma once
#include <vector>

struct Instance {
    int numNodes; // Total number of nodes including depot
    int numCustomers; // Total number of customers (excluding depot)
    int vehicleCapacity; // Capacity of the vehicle (identical for all vehicles)
    std::vector<int> demand;  // Demand of each node (with the depot at index 0 having a demand of 0)
    std::vector<std::vector<float>> distanceMatrix; //Distance matrix between nodes
    std::vector<std::vector<float>> nodePositions; // Node positions in 2D space
    std::vector<std::vector<int>> adj; // Adjacency list for each node, sorted by distance
    std::vector<float> twStart; // Earliest service start time of each node
    std::vector<float> twEnd; // Latest service start time of each node
    std::vector<float> serviceTime; // Service duration of each node (0 for the depot)
    std::vector<float> prize; // Prize of each node, lost when the node is not visited (0 for the depot)
};
