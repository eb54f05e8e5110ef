#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "mmc/rng.hpp"
#include "mmc/tensor.hpp"

namespace testutil {

/// Unique scratch directory under the system temp root, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("mmc-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline mmc::Image random_image(mmc::ImageShape shape, std::uint64_t seed, float lo = 0.0f,
                               float hi = 1.0f) {
    mmc::Rng rng(seed);
    mmc::Image img(shape);
    for (Eigen::Index i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<float>(rng.uniform(lo, hi));
    return img;
}

inline mmc::Image normal_image(mmc::ImageShape shape, std::uint64_t seed) {
    mmc::Rng rng(seed);
    mmc::Image img(shape);
    for (Eigen::Index i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<float>(rng.normal());
    return img;
}

} // namespace testutil
