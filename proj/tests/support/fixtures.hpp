#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cex/explainer.hpp"
#include "cex/model.hpp"
#include "cex/probe.hpp"
#include "cex/synthetic.hpp"

namespace fixture {

cex::InputTensor random_input(std::uint64_t seed, int height = 32, int width = 32);
cex::Image random_image(std::uint64_t seed, int width = 32, int height = 32);

// init_weights plus nonzero biases, so every term of the forward pass is exercised.
cex::ModelWeights random_weights(std::uint64_t seed, int height = 32, int width = 32);

class TempDir {
public:
    explicit TempDir(const std::string& tag = "cex");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

// A small trained and calibrated setup on disk: dataset, model.json and
// bundle.json under dir. Good enough for plumbing tests, not for accuracy.
struct World {
    std::filesystem::path dir;
    cex::SyntheticDataset data;
    cex::ModelWeights weights;
    cex::ProbeBundle bundle;

    std::string model_path() const { return (dir / "model.json").string(); }
    std::string bundle_path() const { return (dir / "bundle.json").string(); }
};

// Built once per process under the system temp directory.
const World& small_world();

}  // namespace fixture
