#include <gtest/gtest.h>

#include "cfsim/cfsim.hpp"

using namespace cfsim;

TEST(Config, DefaultsValidate) {
    SimConfig c;
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, RejectsUnknownKeyWithFieldName) {
    try {
        apply_overrides(SimConfig{}, {{"num_rus", 10}, {"numues", 5}});
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "numues");
    }
}

TEST(Config, RejectsWrongType) {
    EXPECT_THROW(apply_overrides(SimConfig{}, {{"num_rus", "ten"}}), ConfigError);
}

TEST(Config, RejectsNonPrimeSrsOrder) {
    try {
        config_from_json({{"srs_order", 60}});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "srs_order");
    }
}

TEST(Config, RejectsPilotLongerThanSlot) {
    EXPECT_THROW(config_from_json({{"pilot_dim", 300}, {"slot_dim", 200}}), ConfigError);
}

TEST(Config, RejectsAngularSpreadOutOfRange) {
    EXPECT_THROW(config_from_json({{"angular_spread_rad", 7.0}}), ConfigError);
    EXPECT_THROW(config_from_json({{"angular_spread_rad", 0.0}}), ConfigError);
}

TEST(Config, RejectsPilotEnergyOutsideSlot) {
    EXPECT_THROW(config_from_json({{"cuatf_pilot_energies", {0.5, 200.0}}}), ConfigError);
}

TEST(Config, JsonRoundTripPreservesHash) {
    SimConfig c = config_from_json({{"num_rus", 10}, {"antennas_per_ru", 64}, {"ue_tx_power_dbm", 15.0}});
    nlohmann::json j;
    to_json(j, c);
    const SimConfig back = config_from_json(j);
    EXPECT_EQ(config_hash(c), config_hash(back));
    EXPECT_EQ(back.num_rus, 10);
    EXPECT_DOUBLE_EQ(back.ue_tx_power_dbm, 15.0);
}

TEST(Config, HashChangesWithAnyField) {
    const SimConfig a;
    SimConfig b;
    b.pilot_dim = 21;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, NullTxPowerMeansCalibrate) {
    const SimConfig c = config_from_json({{"ue_tx_power_dbm", nullptr}});
    EXPECT_TRUE(std::isnan(c.ue_tx_power_dbm));
}

TEST(Config, PrimeCheck) {
    EXPECT_TRUE(is_prime(2));
    EXPECT_TRUE(is_prime(61));
    EXPECT_FALSE(is_prime(1));
    EXPECT_FALSE(is_prime(49));
}

TEST(Rng, DerivedSeedsDifferByPurposeAndAreStable) {
    const auto a = derive_seed(7, 0, 3, StreamPurpose::Fading);
    const auto b = derive_seed(7, 0, 3, StreamPurpose::PilotNoise);
    EXPECT_NE(a, b);
    EXPECT_EQ(a, derive_seed(7, 0, 3, StreamPurpose::Fading));
    EXPECT_NE(a, derive_seed(8, 0, 3, StreamPurpose::Fading));
}

TEST(Rng, ComplexGaussianHasUnitVariance) {
    RandomStream r(11);
    double p = 0.0;
    Complex m{0.0, 0.0};
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const Complex z = r.complex_gaussian();
        p += std::norm(z);
        m += z;
    }
    EXPECT_NEAR(p / n, 1.0, 0.01);
    EXPECT_NEAR(std::abs(m / static_cast<double>(n)), 0.0, 0.01);
}
