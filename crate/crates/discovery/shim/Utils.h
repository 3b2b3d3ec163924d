#pragma once
#include <vector>

int getRandomNumber(int min, int max);
float getRandomFraction(float min = 0.0, float max = 1.0);
float getRandomFractionFast(); // Function to generate a random fraction (float) in the range [0, 1] using a fast method
std::vector<int> argsort(const std::vector<float>& values); // Function to perform argsort on a vector of float values
