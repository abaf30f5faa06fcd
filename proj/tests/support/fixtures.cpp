#include "fixtures.hpp"

#include <atomic>
#include <cstdlib>
#include <mutex>

#include <unistd.h>

#include "cex/analytics.hpp"
#include "cex/rng.hpp"

namespace fixture {

cex::InputTensor random_input(std::uint64_t seed, int height, int width) {
    cex::Rng rng(seed);
    cex::InputTensor t;
    t.height = height;
    t.width = width;
    t.values.resize(static_cast<std::size_t>(3) * height * width);
    for (auto& v : t.values) v = rng.uniform();
    return t;
}

cex::Image random_image(std::uint64_t seed, int width, int height) {
    cex::Rng rng(seed);
    cex::Image img(width, height);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    return img;
}

cex::ModelWeights random_weights(std::uint64_t seed, int height, int width) {
    auto w = cex::reference_net::init_weights(seed, height, width);
    cex::Rng rng(seed ^ 0x5bd1e995u);
    for (auto& l : w.layers) {
        for (auto& b : l.bias) b = rng.uniform(-0.2, 0.2);
    }
    cex::seal(w);
    return w;
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

const World& small_world() {
    static std::once_flag once;
    static World world;
    std::call_once(once, [] {
        world.dir = std::filesystem::temp_directory_path() / ("cex-world-" + std::to_string(::getpid()));
        std::filesystem::remove_all(world.dir);
        std::filesystem::create_directories(world.dir);
        std::atexit([] {
            std::error_code ec;
            std::filesystem::remove_all(world.dir, ec);
        });

        cex::GeneratorConfig gen;
        gen.samples = 160;
        gen.seed = 99;
        world.data = cex::generate(gen);
        world.data.manifest = cex::write_dataset(world.data, world.dir.string());

        std::vector<cex::ImageSample> train, val;
        for (std::size_t i = 0; i < world.data.samples.size(); ++i) {
            const auto split = world.data.manifest.entries[i].split;
            if (split == cex::Split::train) train.push_back(world.data.samples[i]);
            if (split == cex::Split::validate) val.push_back(world.data.samples[i]);
        }
        cex::TrainConfig tc;
        tc.epochs = 6;
        world.weights = cex::train_reference_net(train, val, tc).weights;
        cex::save_weights(world.weights, (world.dir / "model.json").string());

        const cex::ReferenceNet net(world.weights);
        cex::ProbeTrainingConfig pc;
        pc.runs = 3;
        pc.candidate_layers = {"embedding"};
        world.bundle = cex::train_bundle(net, train, world.data.registry, pc);
        cex::calibrate_bundle(world.bundle, net, train);
        world.bundle.tcav = cex::global_tcav_table(world.bundle, net, train);
        cex::seal(world.bundle);
        cex::save_bundle(world.bundle, (world.dir / "bundle.json").string());
    });
    return world;
}

}  // namespace fixture
