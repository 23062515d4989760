#pragma once

// Published robustness tables with their average-rank column. "-" cells
// (a defence against its own attack) are NaN here.

#include <cmath>
#include <string>
#include <vector>

#include "ladder/eval.hpp"

namespace testing {

struct PublishedRow {
    std::string name;
    std::vector<float> accuracy;
    float avg_rank;
};

struct PublishedTable {
    std::string dataset;
    std::vector<PublishedRow> rows;

    ladder::RobustnessTable table() const {
        std::vector<std::string> names;
        for (const auto& r : rows) names.push_back(r.name);
        ladder::RobustnessTable t(names, {"clean", "fgsm", "jsma", "pgd", "cw", "song", "autoattack"});
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < 7; ++c) {
                if (std::isnan(rows[r].accuracy[c]))
                    t.mask(r, c);
                else
                    t.set(r, c, rows[r].accuracy[c]);
            }
        return t;
    }
};

inline const std::vector<PublishedTable>& published_tables() {
    constexpr float N = NAN;
    static const std::vector<PublishedTable> tables{
        {"SVHN",
         {{"Vanilla", {93.85f, 25, 34.04f, 17.16f, 86.78f, 99.42f, 54.62f}, 4.00f},
          {"FGSM Adv.", {88.66f, N, 37.49f, 20.62f, 83.07f, 97.51f, 66.36f}, 4.83f},
          {"JSMA Adv.", {91.04f, 28.4f, N, 19.6f, 86.22f, 98.69f, 61.8f}, 3.83f},
          {"PGD Adv.", {87.75f, 34.2f, 42.18f, N, 85.96f, 96.69f, 73.18f}, 4.17f},
          {"CW Adv.", {91.11f, 23.6f, 37.64f, 18.11f, N, 98.16f, 63.42f}, 4.33f},
          {"Song Adv.", {93.53f, 28, 33.91f, 17.18f, 87.29f, N, 56.27f}, 4.00f},
          {"LADDER_cavRandom", {91.55f, 24.8f, 36.96f, 14.78f, 84.93f, 98.72f, 50.78f}, 5.86f},
          {"LADDER_Random", {90.12f, 21, 35.69f, 16.42f, 83.96f, 98.33f, 53.87f}, 6.86f},
          {"LADDER", {91.71f, 26.8f, 37.29f, 16.82f, 86.42f, 98.96f, 62}, 3.71f}}},
        {"MNIST",
         {{"Vanilla", {99.13f, 46.6f, 93.91f, 29.93f, 99.09f, 99.82f, 99.56f}, 3.57f},
          {"FGSM Adv.", {92.31f, N, 83.67f, 80.91f, 90.58f, 95.53f, 92.22f}, 6.50f},
          {"JSMA Adv.", {98.56f, 57.8f, N, 51.04f, 98.56f, 99.87f, 98.69f}, 4.17f},
          {"PGD Adv.", {90.79f, 76.2f, 83.31f, N, 90.67f, 94.44f, 90.36f}, 7.00f},
          {"CW Adv.", {98.87f, 59.2f, 94.67f, 44.62f, N, 99.91f, 99.36f}, 3.17f},
          {"Song Adv.", {97.23f, 55.6f, 89.16f, 49.91f, 96.87f, N, 96.69f}, 6.00f},
          {"LADDER_cavRandom", {99.01f, 54.8f, 92.76f, 48.2f, 98.56f, 99.78f, 98.89f}, 5.00f},
          {"LADDER_Random", {98.99f, 64.4f, 92.93f, 56.87f, 98.33f, 99.89f, 99.04f}, 3.29f},
          {"LADDER", {99.12f, 55.8f, 93.13f, 49.2f, 98.9f, 99.82f, 99.36f}, 3.29f}}},
        {"CelebA",
         {{"Vanilla", {91.4f, 52.65f, 83.05f, 13.9f, 62.1f, 92.05f, 49.30f}, 5.43f},
          {"FGSM Adv.", {89.4f, N, 67.15f, 18.55f, 62.95f, 54.95f, 53.95f}, 7.67f},
          {"JSMA Adv.", {90.45f, 53.1f, N, 14.95f, 65.9f, 93.5f, 40.35f}, 5.50f},
          {"PGD Adv.", {89.55f, 51.75f, 63.65f, N, 67.05f, 59.55f, 55.95f}, 6.00f},
          {"CW Adv.", {89.5f, 50.1f, 77.1f, 43.25f, N, 77.8f, 68.35f}, 5.67f},
          {"Song Adv.", {91.15f, 53.2f, 83.9f, 20, 66.15f, N, 49.95f}, 3.50f},
          {"LADDER_cavRandom", {91.1f, 52.8f, 81.9f, 24.9f, 64.95f, 86.8f, 42.55f}, 5.43f},
          {"LADDER_Random", {91.05f, 55.1f, 80.15f, 24.65f, 64.45f, 87, 55.1f}, 4.71f},
          {"LADDER-GAN", {91.45f, 52.75f, 80.9f, 25.25f, 64.7f, 88, 46.7f}, 4.71f},
          {"LADDER", {91.95f, 53.25f, 82.4f, 27.6f, 65.1f, 87.1f, 48.95f}, 3.29f}}},
        {"CIFAR-10",
         {{"Vanilla", {88.99f, 58.02f, 80.81f, 56.87f, 59.99f, 28.01f, 42.31f}, 4.57f},
          {"FGSM Adv.", {67.21f, N, 63.4f, 63.85f, 68.56f, 24.1f, 63.08f}, 4.83f},
          {"JSMA Adv.", {87.87f, 70.72f, N, 73.54f, 78.76f, 29.61f, 67.63f}, 2.17f},
          {"PGD Adv.", {79.12f, 70.71f, 75.7f, N, 72.15f, 23.92f, 69.37f}, 4.17f},
          {"CW Adv.", {84.53f, 76.9f, 81.3f, 79.46f, N, 28.15f, 77.55f}, 2.17f},
          {"Song Adv.", {48.66f, 9.99f, 45.7f, 11.01f, 8.87f, N, 10.75f}, 7.33f},
          {"LADDER-GAN", {85.04f, 59.71f, 75.84f, 58.83f, 60.39f, 31.27f, 45.68f}, 3.86f},
          {"LADDER", {85.92f, 58.26f, 75.84f, 60.18f, 53.92f, 29.85f, 47.75f}, 4.00f}}},
    };
    return tables;
}

}  // namespace testing
