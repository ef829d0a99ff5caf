#include <doctest.h>

#include <cmath>
#include <vector>

#include "kae/baselines.hpp"
#include "testing.hpp"

using namespace kae;

namespace {

// The worked Algorithm 1 example used across this file: two historical
// rewards of 1 at iterations 2 and 3, evaluated at iteration 4 with a
// two-member current group whose non-left-out reward is 0.
HistoryStore two_record_store() {
    HistoryStore store;
    store.record(0, 2, {1.0});
    store.record(0, 3, {1.0});
    return store;
}

}  // namespace

TEST_CASE("group leave-one-out mean") {
    CHECK(grpo_loo_value({1.0, 0.0, 1.0}, 0) == doctest::Approx(0.5));
    CHECK(grpo_loo_value({1.0, 1.0, 1.0, 1.0}, 2) == doctest::Approx(1.0));
    CHECK(error_code_of([] { grpo_loo_value({1.0}, 0); }) == Errc::degenerate_group);
    CHECK(error_code_of([] { grpo_loo_value({1.0, 0.0}, 2); }) == Errc::malformed_input);
}

TEST_CASE("batch leave-one-out mean") {
    CHECK(rpp_batch_value({1.0, 0.0, 1.0, 1.0}, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(rpp_batch_value({0.0, 0.0, 0.0, 0.0}, 3) == doctest::Approx(0.0));
    CHECK(error_code_of([] { rpp_batch_value({1.0}, 0); }) == Errc::degenerate_batch);
}

TEST_CASE("bandwidth rules resolve to the documented scales") {
    CHECK(resolve_bandwidth(BandwidthRule::fixed(0.5), 1, 4) == doctest::Approx(2.0));
    // 32^(1/5) = 2, so stone gives 10 * 1 / 2
    CHECK(resolve_bandwidth(BandwidthRule::stone(1.0, 2), 32, 10) ==
          doctest::Approx(5.0).epsilon(1e-12));
    CHECK(resolve_bandwidth(BandwidthRule::fixed_window(4), 1, 100) == doctest::Approx(4.0));

    CHECK(error_code_of([] { resolve_bandwidth(BandwidthRule::fixed(0.5), 1, 0); }) ==
          Errc::undefined_scale);
    CHECK(error_code_of([] { resolve_bandwidth(BandwidthRule::stone(1.0, 2), 1, 0); }) ==
          Errc::undefined_scale);
    CHECK(error_code_of([] { resolve_bandwidth(BandwidthRule::stone(1.0, 2), 0, 5); }) ==
          Errc::undefined_scale);
}

TEST_CASE("bandwidth rule factories validate their parameters") {
    CHECK(error_code_of([] { BandwidthRule::fixed(0.0); }) == Errc::invalid_bandwidth);
    CHECK(error_code_of([] { BandwidthRule::stone(-1.0, 2); }) == Errc::invalid_bandwidth);
    CHECK(error_code_of([] { BandwidthRule::stone(1.0, 1); }) == Errc::invalid_bandwidth);
    CHECK(error_code_of([] { BandwidthRule::fixed_window(0); }) == Errc::invalid_bandwidth);
}

TEST_CASE("kae_value reproduces the worked Algorithm 1 numbers") {
    const HistoryStore store = two_record_store();
    const KernelSpec kernel = KernelSpec::triangular();
    const BandwidthRule rule = BandwidthRule::fixed(0.5);
    // iteration 4, scale 2: lags 2 and 1 weigh 0 and 0.5. Current group
    // contributes K(0) * 0 for the non-left-out member.
    const std::vector<double> group{0.0, 123.0};  // slot 1 is left out
    CHECK(kae_value(store, 0, 4, group, 1, kernel, rule, KaeMode::nw) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // alg1: M = h|H| + (G-1)K(0) = 0.5*2 + 1
    CHECK(kae_value(store, 0, 4, group, 1, kernel, rule, KaeMode::alg1) ==
          doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("kae_value is a fixpoint on constant rewards") {
    HistoryStore store;
    store.record(0, 1, {1.0, 1.0});
    store.record(0, 2, {1.0, 1.0});
    const std::vector<double> group{1.0, 1.0, 1.0};
    for (const KernelSpec& kernel :
         {KernelSpec::triangular(), KernelSpec::uniform(), KernelSpec::exponential(0.5)}) {
        const double v =
            kae_value(store, 0, 3, group, 0, kernel, BandwidthRule::fixed(1.0), KaeMode::nw);
        CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("kae_value with empty history equals the group mean") {
    const HistoryStore store;
    const std::vector<double> group{1.0, 0.0, 1.0, 0.0};
    const double v = kae_value(store, 0, 0, group, 0, KernelSpec::triangular(),
                               BandwidthRule::fixed_window(4), KaeMode::nw);
    CHECK(v == grpo_loo_value(group, 0));
}

TEST_CASE("kae_value error cases") {
    const HistoryStore store;
    CHECK(error_code_of([&] {
              kae_value(store, 0, 0, {1.0}, 0, KernelSpec::triangular(),
                        BandwidthRule::fixed_window(4), KaeMode::nw);
          }) == Errc::no_data);
    CHECK(error_code_of([&] {
              kae_value(store, 0, 0, {1.0, 0.0}, 0, KernelSpec::triangular(),
                        BandwidthRule::fixed_window(4), KaeMode::alg1);
          }) == Errc::unsupported_normalization);
    CHECK(error_code_of([&] {
              kae_value(store, 0, 0, {1.0, 0.0}, 5, KernelSpec::triangular(),
                        BandwidthRule::fixed_window(4), KaeMode::nw);
          }) == Errc::malformed_input);
}

TEST_CASE("kae_value falls back to the group mean when all weights truncate") {
    HistoryStore store;
    store.record(0, 0, {1.0, 1.0});
    // iteration 10 with window 1: lag 10 is far outside the support
    const std::vector<double> group{1.0, 0.0, 0.0};
    const double v = kae_value(store, 0, 10, group, 0, KernelSpec::triangular(),
                               BandwidthRule::fixed_window(1), KaeMode::nw);
    CHECK(v == grpo_loo_value(group, 0));
}

TEST_CASE("kae_value ignores the left-out reward entirely") {
    const HistoryStore store = two_record_store();
    const KernelSpec kernel = KernelSpec::triangular();
    for (KaeMode mode : {KaeMode::nw, KaeMode::alg1}) {
        const double a = kae_value(store, 0, 4, {0.5, 0.25, 0.0}, 1, kernel,
                                   BandwidthRule::fixed(0.5), mode);
        const double b = kae_value(store, 0, 4, {0.5, 777.0, 0.0}, 1, kernel,
                                   BandwidthRule::fixed(0.5), mode);
        CHECK(a == b);
    }
    CHECK(grpo_loo_value({1.0, 0.0, 1.0}, 1) == grpo_loo_value({1.0, 55.0, 1.0}, 1));
    CHECK(rpp_batch_value({1.0, 0.0, 1.0}, 1) == rpp_batch_value({1.0, 55.0, 1.0}, 1));
}

TEST_CASE("Nadaraya-Watson output is invariant to kernel rescaling") {
    const HistoryStore store = two_record_store();
    const KernelSpec kernel = KernelSpec::triangular();
    const std::vector<double> group{0.0, 0.5, 1.0};
    const double base = kae_value(store, 0, 4, group, 2, kernel, BandwidthRule::fixed(0.7),
                                  KaeMode::nw);
    const double scaled = kae_value(store, 0, 4, group, 2, kernel.scaled(3.0),
                                    BandwidthRule::fixed(0.7), KaeMode::nw);
    CHECK(scaled == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("max_contributing_lag bounds the kernel's reach") {
    CHECK(max_contributing_lag(KernelSpec::triangular(), 4.0) == 4);
    CHECK(max_contributing_lag(KernelSpec::exponential(0.5), 1.0) == 27);
    CHECK(max_contributing_lag(KernelSpec::uniform(), 2.5) == 3);
    CHECK(error_code_of([] { max_contributing_lag(KernelSpec::uniform(), 0.0); }) ==
          Errc::invalid_bandwidth);
}

TEST_CASE("advantage subtracts the value estimate") {
    CHECK(advantage(1.0, 0.5) == doctest::Approx(0.5));
    CHECK(advantage(0.0, 0.0) == 0.0);
    CHECK(advantage(0.0, 1.0 / 3.0) == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("kae mode lookup") {
    CHECK(kae_mode_of(BaselineKind::kae_nw) == KaeMode::nw);
    CHECK(kae_mode_of(BaselineKind::kae_alg1) == KaeMode::alg1);
    CHECK(error_code_of([] { kae_mode_of(BaselineKind::zero); }) == Errc::config_error);
}

TEST_CASE("group reward std") {
    CHECK(group_reward_std({1.0, 0.0}) == doctest::Approx(0.5));
    CHECK(group_reward_std({1.0, 1.0, 1.0}) == doctest::Approx(0.0));
    CHECK(error_code_of([] { group_reward_std({}); }) == Errc::degenerate_group);
}

TEST_CASE("baseline kind names") {
    CHECK(std::string(baseline_kind_name(BaselineKind::zero)) == "zero");
    CHECK(std::string(baseline_kind_name(BaselineKind::batch_mean_loo)) == "batch_mean_loo");
    CHECK(std::string(baseline_kind_name(BaselineKind::group_mean_loo)) == "group_mean_loo");
    CHECK(std::string(baseline_kind_name(BaselineKind::kae_nw)) == "kae_nw");
    CHECK(std::string(baseline_kind_name(BaselineKind::kae_alg1)) == "kae_alg1");
    CHECK(std::string(baseline_kind_name(BaselineKind::oracle)) == "oracle");
}
