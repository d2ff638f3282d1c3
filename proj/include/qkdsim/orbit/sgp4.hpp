#pragma once

#include <cmath>
#include <string>

#include "qkdsim/core/error.hpp"
#include "qkdsim/core/time.hpp"
#include "qkdsim/core/vec.hpp"
#include "qkdsim/orbit/tle.hpp"

namespace qkdsim::orbit {

// WGS-72 constants, the gravity model TLE mean elements are fitted with.
namespace wgs72 {
inline constexpr double mu = 398600.8;              // km^3/s^2
inline constexpr double radius_km = 6378.135;       // equatorial radius
inline constexpr double j2 = 0.001082616;
inline constexpr double j3 = -0.00000253881;
inline constexpr double j4 = -0.00000165597;
inline const double xke = 60.0 / std::sqrt(radius_km * radius_km * radius_km / mu);  // er^1.5/min
inline const double vkmpersec = radius_km * xke / 60.0;
}  // namespace wgs72

/// Inertial (TEME) position and velocity.
struct StateVector {
  Vec3 position_km;
  Vec3 velocity_km_s;
};

/// Near-Earth SGP4 propagator (orbital period below 225 minutes).
///
/// Follows the revised reference formulation of the Spacetrack Report #3
/// model: Brouwer mean motion recovery at epoch, secular gravity and drag
/// terms, long-period periodics, Kepler solution, then short-period
/// periodics. Deep-space (SDP4) resonance and lunisolar terms are not
/// implemented; such element sets are rejected at construction.
class Sgp4 {
 public:
  explicit Sgp4(const TwoLineElement& tle) : tle_(tle) { init(); }

  const TwoLineElement& elements() const { return tle_; }

  /// Recovered (Brouwer) mean motion in rad/min.
  double mean_motion_rad_per_min() const { return no_unkozai_; }

  StateVector propagate(const UtcTime& t) const {
    const double minutes = t.seconds_since(epoch_) / 60.0;
    if (std::fabs(minutes) > 30.0 * 1440.0)
      warn("StaleElements", "propagating " + std::to_string(minutes / 1440.0) + " days from TLE epoch");
    return propagate_minutes(minutes);
  }

  StateVector propagate_minutes(double tsince) const {
    constexpr double x2o3 = 2.0 / 3.0;
    using namespace wgs72;

    const double xmdf = mo_ + mdot_ * tsince;
    const double argpdf = argpo_ + argpdot_ * tsince;
    const double nodedf = nodeo_ + nodedot_ * tsince;
    double argpm = argpdf;
    double mm = xmdf;
    const double t2 = tsince * tsince;
    double nodem = nodedf + nodecf_ * t2;
    double tempa = 1.0 - cc1_ * tsince;
    double tempe = bstar_ * cc4_ * tsince;
    double templ = t2cof_ * t2;

    if (!isimp_) {
      const double delomg = omgcof_ * tsince;
      const double delmtemp = 1.0 + eta_ * std::cos(xmdf);
      const double delm = xmcof_ * (delmtemp * delmtemp * delmtemp - delmo_);
      const double temp = delomg + delm;
      mm = xmdf + temp;
      argpm = argpdf - temp;
      const double t3 = t2 * tsince;
      const double t4 = t3 * tsince;
      tempa = tempa - d2_ * t2 - d3_ * t3 - d4_ * t4;
      tempe = tempe + bstar_ * cc5_ * (std::sin(mm) - sinmao_);
      templ = templ + t3cof_ * t3 + t4 * (t4cof_ + tsince * t5cof_);
    }

    double nm = no_unkozai_;
    double em = ecco_;
    const double inclm = inclo_;
    const double am = std::pow(xke / nm, x2o3) * tempa * tempa;
    nm = xke / std::pow(am, 1.5);
    em = em - tempe;
    if (em >= 1.0 || em < -0.001)
      throw Error(ErrorCode::DecayedOrbit, "orbit_dynamics",
                  "mean eccentricity out of range at t=" + std::to_string(tsince) + " min");
    if (em < 1.0e-6) em = 1.0e-6;
    mm = mm + no_unkozai_ * templ;
    double xlm = mm + argpm + nodem;

    nodem = std::fmod(nodem, kTwoPi);
    argpm = std::fmod(argpm, kTwoPi);
    xlm = std::fmod(xlm, kTwoPi);
    mm = std::fmod(xlm - argpm - nodem, kTwoPi);

    const double sinip = std::sin(inclm);
    const double cosip = std::cos(inclm);

    // long-period periodics
    const double axnl = em * std::cos(argpm);
    double temp = 1.0 / (am * (1.0 - em * em));
    const double aynl = em * std::sin(argpm) + temp * aycof_;
    const double xl = mm + argpm + nodem + temp * xlcof_ * axnl;

    // Kepler's equation
    const double u = std::fmod(xl - nodem, kTwoPi);
    double eo1 = u;
    double tem5 = 9999.9;
    double sineo1 = 0.0, coseo1 = 0.0;
    for (int ktr = 1; std::fabs(tem5) >= 1.0e-12 && ktr <= 10; ++ktr) {
      sineo1 = std::sin(eo1);
      coseo1 = std::cos(eo1);
      tem5 = 1.0 - coseo1 * axnl - sineo1 * aynl;
      tem5 = (u - aynl * coseo1 + axnl * sineo1 - eo1) / tem5;
      if (std::fabs(tem5) >= 0.95) tem5 = tem5 > 0.0 ? 0.95 : -0.95;
      eo1 += tem5;
    }

    // short-period preliminary quantities
    const double ecose = axnl * coseo1 + aynl * sineo1;
    const double esine = axnl * sineo1 - aynl * coseo1;
    const double el2 = axnl * axnl + aynl * aynl;
    const double pl = am * (1.0 - el2);
    if (pl < 0.0)
      throw Error(ErrorCode::DecayedOrbit, "orbit_dynamics",
                  "semi-latus rectum negative at t=" + std::to_string(tsince) + " min");
    const double rl = am * (1.0 - ecose);
    const double rdotl = std::sqrt(am) * esine / rl;
    const double rvdotl = std::sqrt(pl) / rl;
    const double betal = std::sqrt(1.0 - el2);
    temp = esine / (1.0 + betal);
    const double sinu = am / rl * (sineo1 - aynl - axnl * temp);
    const double cosu = am / rl * (coseo1 - axnl + aynl * temp);
    double su = std::atan2(sinu, cosu);
    const double sin2u = (cosu + cosu) * sinu;
    const double cos2u = 1.0 - 2.0 * sinu * sinu;
    temp = 1.0 / pl;
    const double temp1 = 0.5 * j2 * temp;
    const double temp2 = temp1 * temp;

    // short-period periodics
    const double mrt = rl * (1.0 - 1.5 * temp2 * betal * con41_) + 0.5 * temp1 * x1mth2_ * cos2u;
    su = su - 0.25 * temp2 * x7thm1_ * sin2u;
    const double xnode = nodem + 1.5 * temp2 * cosip * sin2u;
    const double xinc = inclm + 1.5 * temp2 * cosip * sinip * cos2u;
    const double mvt = rdotl - nm * temp1 * x1mth2_ * sin2u / xke;
    const double rvdot = rvdotl + nm * temp1 * (x1mth2_ * cos2u + 1.5 * con41_) / xke;

    const double sinsu = std::sin(su), cossu = std::cos(su);
    const double snod = std::sin(xnode), cnod = std::cos(xnode);
    const double sini = std::sin(xinc), cosi = std::cos(xinc);
    const double xmx = -snod * cosi;
    const double xmy = cnod * cosi;
    const Vec3 uv{xmx * sinsu + cnod * cossu, xmy * sinsu + snod * cossu, sini * sinsu};
    const Vec3 vv{xmx * cossu - cnod * sinsu, xmy * cossu - snod * sinsu, sini * cossu};

    if (mrt < 1.0)
      throw Error(ErrorCode::DecayedOrbit, "orbit_dynamics",
                  "orbit radius below Earth radius at t=" + std::to_string(tsince) + " min");

    StateVector s;
    s.position_km = (mrt * radius_km) * uv;
    s.velocity_km_s = vkmpersec * (mvt * uv + rvdot * vv);
    return s;
  }

 private:
  void init() {
    using namespace wgs72;
    constexpr double x2o3 = 2.0 / 3.0;
    constexpr double xpdotp = 1440.0 / kTwoPi;
    const double j3oj2 = j3 / j2;

    epoch_ = tle_.epoch();
    bstar_ = tle_.bstar;
    ecco_ = tle_.eccentricity;
    inclo_ = tle_.inclination * kDeg;
    nodeo_ = tle_.raan * kDeg;
    argpo_ = tle_.arg_perigee * kDeg;
    mo_ = tle_.mean_anomaly * kDeg;
    const double no_kozai = tle_.mean_motion / xpdotp;

    // recover the original mean motion and semi-major axis
    const double eccsq = ecco_ * ecco_;
    const double omeosq = 1.0 - eccsq;
    const double rteosq = std::sqrt(omeosq);
    const double cosio = std::cos(inclo_);
    const double cosio2 = cosio * cosio;
    const double ak = std::pow(xke / no_kozai, x2o3);
    const double d1 = 0.75 * j2 * (3.0 * cosio2 - 1.0) / (rteosq * omeosq);
    double del = d1 / (ak * ak);
    const double adel = ak * (1.0 - del * del - del * (1.0 / 3.0 + 134.0 * del * del / 81.0));
    del = d1 / (adel * adel);
    no_unkozai_ = no_kozai / (1.0 + del);
    const double ao = std::pow(xke / no_unkozai_, x2o3);
    const double sinio = std::sin(inclo_);
    const double po = ao * omeosq;
    const double con42 = 1.0 - 5.0 * cosio2;
    con41_ = -con42 - cosio2 - cosio2;
    const double posq = po * po;
    const double rp = ao * (1.0 - ecco_);

    if (kTwoPi / no_unkozai_ >= 225.0)
      throw Error(ErrorCode::InvalidArgument, "orbit_dynamics",
                  "deep-space element set (period >= 225 min) is not supported");

    const double ss = 78.0 / radius_km + 1.0;
    const double qzms2ttemp = (120.0 - 78.0) / radius_km;
    const double qzms2t = qzms2ttemp * qzms2ttemp * qzms2ttemp * qzms2ttemp;

    isimp_ = rp < (220.0 / radius_km + 1.0);
    double sfour = ss;
    double qzms24 = qzms2t;
    const double perige = (rp - 1.0) * radius_km;
    if (perige < 156.0) {
      sfour = perige - 78.0;
      if (perige < 98.0) sfour = 20.0;
      const double q = (120.0 - sfour) / radius_km;
      qzms24 = q * q * q * q;
      sfour = sfour / radius_km + 1.0;
    }
    const double pinvsq = 1.0 / posq;
    const double tsi = 1.0 / (ao - sfour);
    eta_ = ao * ecco_ * tsi;
    const double etasq = eta_ * eta_;
    const double eeta = ecco_ * eta_;
    const double psisq = std::fabs(1.0 - etasq);
    const double coef = qzms24 * std::pow(tsi, 4.0);
    const double coef1 = coef / std::pow(psisq, 3.5);
    const double cc2 = coef1 * no_unkozai_ *
                       (ao * (1.0 + 1.5 * etasq + eeta * (4.0 + etasq)) +
                        0.375 * j2 * tsi / psisq * con41_ * (8.0 + 3.0 * etasq * (8.0 + etasq)));
    cc1_ = bstar_ * cc2;
    double cc3 = 0.0;
    if (ecco_ > 1.0e-4) cc3 = -2.0 * coef * tsi * j3oj2 * no_unkozai_ * sinio / ecco_;
    x1mth2_ = 1.0 - cosio2;
    cc4_ = 2.0 * no_unkozai_ * coef1 * ao * omeosq *
           (eta_ * (2.0 + 0.5 * etasq) + ecco_ * (0.5 + 2.0 * etasq) -
            j2 * tsi / (ao * psisq) *
                (-3.0 * con41_ * (1.0 - 2.0 * eeta + etasq * (1.5 - 0.5 * eeta)) +
                 0.75 * x1mth2_ * (2.0 * etasq - eeta * (1.0 + etasq)) * std::cos(2.0 * argpo_)));
    cc5_ = 2.0 * coef1 * ao * omeosq * (1.0 + 2.75 * (etasq + eeta) + eeta * etasq);
    const double cosio4 = cosio2 * cosio2;
    const double temp1 = 1.5 * j2 * pinvsq * no_unkozai_;
    const double temp2 = 0.5 * temp1 * j2 * pinvsq;
    const double temp3 = -0.46875 * j4 * pinvsq * pinvsq * no_unkozai_;
    mdot_ = no_unkozai_ + 0.5 * temp1 * rteosq * con41_ +
            0.0625 * temp2 * rteosq * (13.0 - 78.0 * cosio2 + 137.0 * cosio4);
    argpdot_ = -0.5 * temp1 * con42 + 0.0625 * temp2 * (7.0 - 114.0 * cosio2 + 395.0 * cosio4) +
               temp3 * (3.0 - 36.0 * cosio2 + 49.0 * cosio4);
    const double xhdot1 = -temp1 * cosio;
    nodedot_ = xhdot1 + (0.5 * temp2 * (4.0 - 19.0 * cosio2) + 2.0 * temp3 * (3.0 - 7.0 * cosio2)) * cosio;
    omgcof_ = bstar_ * cc3 * std::cos(argpo_);
    xmcof_ = 0.0;
    if (ecco_ > 1.0e-4) xmcof_ = -x2o3 * coef * bstar_ / eeta;
    nodecf_ = 3.5 * omeosq * xhdot1 * cc1_;
    t2cof_ = 1.5 * cc1_;
    if (std::fabs(cosio + 1.0) > 1.5e-12)
      xlcof_ = -0.25 * j3oj2 * sinio * (3.0 + 5.0 * cosio) / (1.0 + cosio);
    else
      xlcof_ = -0.25 * j3oj2 * sinio * (3.0 + 5.0 * cosio) / 1.5e-12;
    aycof_ = -0.5 * j3oj2 * sinio;
    const double delmotemp = 1.0 + eta_ * std::cos(mo_);
    delmo_ = delmotemp * delmotemp * delmotemp;
    sinmao_ = std::sin(mo_);
    x7thm1_ = 7.0 * cosio2 - 1.0;

    if (!isimp_) {
      const double cc1sq = cc1_ * cc1_;
      d2_ = 4.0 * ao * tsi * cc1sq;
      const double temp = d2_ * tsi * cc1_ / 3.0;
      d3_ = (17.0 * ao + sfour) * temp;
      d4_ = 0.5 * temp * ao * tsi * (221.0 * ao + 31.0 * sfour) * cc1_;
      t3cof_ = d2_ + 2.0 * cc1sq;
      t4cof_ = 0.25 * (3.0 * d3_ + cc1_ * (12.0 * d2_ + 10.0 * cc1sq));
      t5cof_ = 0.2 * (3.0 * d4_ + 12.0 * cc1_ * d3_ + 6.0 * d2_ * d2_ + 15.0 * cc1sq * (2.0 * d2_ + cc1sq));
    }
  }

  TwoLineElement tle_;
  UtcTime epoch_;
  bool isimp_ = false;
  double bstar_ = 0, ecco_ = 0, inclo_ = 0, nodeo_ = 0, argpo_ = 0, mo_ = 0, no_unkozai_ = 0;
  double con41_ = 0, x1mth2_ = 0, x7thm1_ = 0, eta_ = 0;
  double cc1_ = 0, cc4_ = 0, cc5_ = 0, d2_ = 0, d3_ = 0, d4_ = 0;
  double mdot_ = 0, argpdot_ = 0, nodedot_ = 0, omgcof_ = 0, xmcof_ = 0, nodecf_ = 0;
  double t2cof_ = 0, t3cof_ = 0, t4cof_ = 0, t5cof_ = 0, xlcof_ = 0, aycof_ = 0, delmo_ = 0, sinmao_ = 0;
};

/// Position and velocity at `t`. Warns (StaleElements) beyond 30 days from epoch.
inline StateVector propagate(const TwoLineElement& tle, const UtcTime& t) { return Sgp4(tle).propagate(t); }

}  // namespace qkdsim::orbit
