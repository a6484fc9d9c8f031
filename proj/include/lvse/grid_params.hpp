#pragma once

// Constants of the synthetic MV-LV reference feeder. The real network data
// is private; these values describe a typical Danish suburban feeder with
// 150 mm2 Al LV cables and are sized so that coincident EV charging below
// SubS produces leaf-node drops of a few percent.

#include <complex>

namespace lvse::grid_params {

inline constexpr double kBasePowerKva = 1000.0;  // 1 MVA system base
inline constexpr double kMvBaseKv = 10.0;
inline constexpr double kLvBaseKv = 0.4;

inline constexpr double kMvBaseOhm = kMvBaseKv * kMvBaseKv * 1000.0 / kBasePowerKva;  // 100 ohm
inline constexpr double kLvBaseOhm = kLvBaseKv * kLvBaseKv * 1000.0 / kBasePowerKva;  // 0.16 ohm

// 60/10 kV primary transformer (10 MVA, uk 10 %, ur 0.8 %), referred to 1 MVA.
inline constexpr std::complex<double> kPrimaryTransformer{0.0008, 0.0100};

// MV cable 240 mm2 Al: ohm per km.
inline constexpr double kMvCableR = 0.125;
inline constexpr double kMvCableX = 0.100;

// 10/0.4 kV secondary transformer at SubS (400 kVA, uk 4.5 %, ur 1.2 %).
inline constexpr std::complex<double> kSubsTransformer{0.0300, 0.1084};

// LV cable 150 mm2 Al: ohm per km (R/X ~ 2.6).
inline constexpr double kLvCableR = 0.206;
inline constexpr double kLvCableX = 0.080;

// MV cable lengths between substations, km.
inline constexpr double kMvLenSubpToA = 2.0;
inline constexpr double kMvLenAToB = 1.5;
inline constexpr double kMvLenAToC = 1.8;
inline constexpr double kMvLenCToD = 1.2;
inline constexpr double kMvLenCToE = 2.2;
inline constexpr double kMvLenDToSubs = 1.0;

// LV feeder segment lengths below SubS, km.
inline constexpr double kLvTrunkWest = 0.22;
inline constexpr double kLvTrunkEast = 0.20;
inline constexpr double kLvBranchWest = 0.12;
inline constexpr double kLvBranchEast = 0.11;
inline constexpr double kLvServiceShort = 0.05;
inline constexpr double kLvServiceLong = 0.08;

constexpr std::complex<double> mv_cable(double km) {
    return {kMvCableR * km / kMvBaseOhm, kMvCableX * km / kMvBaseOhm};
}

constexpr std::complex<double> lv_cable(double km) {
    return {kLvCableR * km / kLvBaseOhm, kLvCableX * km / kLvBaseOhm};
}

}  // namespace lvse::grid_params
