#pragma once

#include <memory>
#include <string>

#include "cex/localiser.hpp"

namespace cex {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 binds any free port
    std::string model_path;
    std::string bundle_path;
    std::string data_dir;   // optional dataset with manifest.jsonl, served as cases
    std::string store_dir;  // case store root; defaults to <data_dir>/cases, else ./cases
    bool read_only = false;
    int threads = 4;
    ClmConfig clm;
};

// HTTP JSON API under /api. Construction loads the model and the calibrated
// bundle and throws hash_mismatch for a stale bundle; dataset cases are
// explained in the background and the case endpoints answer 503 until then.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds and serves on a background thread; returns the bound port.
    // Throws io when the port is taken.
    int start();
    void stop();
    // start() then block until stop().
    void run();

    bool ready() const;
    void wait_ready() const;

    const std::string& model_hash() const;
    const std::string& bundle_hash() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace cex
