#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <gflowot/gflowot.h>

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

struct EnvHandle {
    gfot_env* env = nullptr;
    EnvHandle(int dims, int side, double r0) { REQUIRE(gfot_env_create_hypergrid(dims, side, r0, &env) == GFOT_OK); }
    ~EnvHandle() { gfot_env_destroy(env); }
};

struct ModelHandle {
    gfot_model* model = nullptr;
    ModelHandle(const EnvHandle& e, int hidden, uint64_t seed, int uniform_pb = 0) {
        REQUIRE(gfot_model_create(e.env, hidden, hidden, uniform_pb, seed, &model) == GFOT_OK);
    }
    ~ModelHandle() { gfot_model_destroy(model); }
};

} // namespace

TEST_CASE("status names") {
    CHECK(std::strcmp(gfot_status_name(GFOT_OK), "ok") == 0);
    CHECK(std::strcmp(gfot_status_name(GFOT_ERR_INVALID_ARGUMENT), "invalid_argument") == 0);
    CHECK(std::strcmp(gfot_status_name(GFOT_ERR_IO), "io_error") == 0);
}

TEST_CASE("argument validation reports through status and last_error") {
    gfot_env* env = nullptr;
    CHECK(gfot_env_create_hypergrid(0, 8, 1e-3, &env) == GFOT_ERR_INVALID_ARGUMENT);
    CHECK(env == nullptr);
    CHECK(std::strlen(gfot_last_error()) > 0);
    CHECK(gfot_env_create_hypergrid(2, 1, 1e-3, &env) == GFOT_ERR_INVALID_ARGUMENT);
    CHECK(gfot_env_create_hypergrid(2, 8, 1e-3, nullptr) == GFOT_ERR_INVALID_ARGUMENT);

    EnvHandle good(2, 8, 1e-3);
    double out = 0.0;
    CHECK(gfot_env_reward(nullptr, nullptr, 0, &out) == GFOT_ERR_INVALID_ARGUMENT);
    const int coords3[3] = {1, 2, 3};
    CHECK(gfot_env_reward(good.env, coords3, 3, &out) == GFOT_ERR_INVALID_ARGUMENT);
}

TEST_CASE("environment queries") {
    EnvHandle env(2, 8, 1e-3);
    double r = 0.0;
    const int mode_cell[2] = {6, 6};
    REQUIRE(gfot_env_reward(env.env, mode_cell, 2, &r) == GFOT_OK);
    CHECK(r == doctest::Approx(2.501).epsilon(1e-15));
    double z = 0.0;
    REQUIRE(gfot_env_partition(env.env, &z) == GFOT_OK);
    CHECK(z == doctest::Approx(16.064).epsilon(1e-12));
    int modes = 0;
    REQUIRE(gfot_env_mode_count(env.env, &modes) == GFOT_OK);
    CHECK(modes == 4);
}

TEST_CASE("model lifecycle and checkpoints through the C API") {
    EnvHandle env(2, 6, 1e-3);
    ModelHandle model(env, 24, 11);
    double lz = -1.0;
    REQUIRE(gfot_model_log_z(model.model, &lz) == GFOT_OK);
    CHECK(lz == 0.0);

    const char* path = "/tmp/gflowot_capi_ckpt.bin";
    REQUIRE(gfot_model_save(model.model, path) == GFOT_OK);
    gfot_model* loaded = nullptr;
    REQUIRE(gfot_model_load(env.env, path, &loaded) == GFOT_OK);
    double tv_a = 0.0, tv_b = 0.0;
    REQUIRE(gfot_eval_exact(env.env, model.model, &tv_a, nullptr) == GFOT_OK);
    REQUIRE(gfot_eval_exact(env.env, loaded, &tv_b, nullptr) == GFOT_OK);
    CHECK(tv_a == tv_b);
    gfot_model_destroy(loaded);
    std::filesystem::remove(path);

    gfot_model* missing = nullptr;
    CHECK(gfot_model_load(env.env, "/tmp/definitely_not_there.bin", &missing) == GFOT_ERR_IO);
    CHECK(missing == nullptr);
}

TEST_CASE("training through the C API is deterministic and writes outputs") {
    EnvHandle env(2, 8, 1e-3);
    gfot_train_config cfg;
    gfot_train_config_init(&cfg);
    CHECK(cfg.steps == 62500);
    CHECK(cfg.batch == 16);
    CHECK(cfg.lr_policy == doctest::Approx(1e-3));
    CHECK(cfg.lr_logz == doctest::Approx(0.1));
    cfg.steps = 30;
    cfg.batch = 8;
    cfg.seed = 3;
    cfg.log_every = 10;
    cfg.reg_mode = GFOT_REG_UB_OT;
    cfg.lambda = 0.02;

    auto run = [&](const char* dir, gfot_train_summary* summary) {
        std::filesystem::remove_all(dir);
        ModelHandle model(env, 16, cfg.seed);
        REQUIRE(gfot_train_run(env.env, model.model, &cfg, dir, summary) == GFOT_OK);
    };
    gfot_train_summary sa{}, sb{};
    run("/tmp/gflowot_capi_a", &sa);
    run("/tmp/gflowot_capi_b", &sb);
    CHECK(sa.steps_run == 30);
    CHECK(sa.trajectories == 30 * 8);
    CHECK(sa.modes_found >= 0);
    CHECK(sa.final_kl >= 0.0);
    CHECK(sa.log_z == sb.log_z);
    CHECK(read_file("/tmp/gflowot_capi_a/metrics.csv") == read_file("/tmp/gflowot_capi_b/metrics.csv"));
    CHECK(read_file("/tmp/gflowot_capi_a/config.json") == read_file("/tmp/gflowot_capi_b/config.json"));
    std::filesystem::remove_all("/tmp/gflowot_capi_a");
    std::filesystem::remove_all("/tmp/gflowot_capi_b");
}

TEST_CASE("bad enum values are rejected") {
    EnvHandle env(2, 6, 1e-3);
    ModelHandle model(env, 8, 1);
    gfot_train_config cfg;
    gfot_train_config_init(&cfg);
    cfg.steps = 1;
    cfg.reg_mode = 99;
    CHECK(gfot_train_run(env.env, model.model, &cfg, nullptr, nullptr) == GFOT_ERR_INVALID_ARGUMENT);
    CHECK(std::strlen(gfot_last_error()) > 0);
}

TEST_CASE("eval reports sane ranges") {
    EnvHandle env(2, 6, 1e-3);
    ModelHandle model(env, 16, 5);
    double tv = -1.0, kl = -1.0;
    REQUIRE(gfot_eval_exact(env.env, model.model, &tv, &kl) == GFOT_OK);
    CHECK(tv >= 0.0);
    CHECK(tv <= 1.0);
    CHECK(kl >= 0.0);
}
