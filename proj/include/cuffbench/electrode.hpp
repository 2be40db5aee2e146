#pragma once

// Cuff geometry and the seven stimulation configurations (one ring pattern
// plus six steering-current patterns, one per central contact).

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cuffbench {

inline constexpr int kCentralContacts = 6;

/// Exact rational weight. Always stored reduced with a positive denominator.
class Fraction {
 public:
  constexpr Fraction() = default;
  Fraction(std::int64_t num, std::int64_t den = 1);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  Fraction operator+(const Fraction& o) const;
  Fraction operator-() const { return Fraction(-num_, den_); }
  bool operator==(const Fraction&) const = default;
  std::strong_ordering operator<=>(const Fraction& o) const;

  std::string str() const;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

struct ContactId {
  enum class Kind : std::uint8_t { RingDistal, RingProximal, Central };

  Kind kind = Kind::Central;
  int index = 1;  // 1..6 for Central, 0 for rings

  static ContactId ring_distal() { return {Kind::RingDistal, 0}; }
  static ContactId ring_proximal() { return {Kind::RingProximal, 0}; }
  /// Throws DomainError unless 1 <= k <= 6.
  static ContactId central(int k);

  bool is_central() const { return kind == Kind::Central; }
  std::string name() const;
  static std::optional<ContactId> parse(const std::string& name);

  auto operator<=>(const ContactId&) const = default;
};

/// All eight contacts of the cuff, rings first.
std::array<ContactId, 8> all_contacts();

/// 1-based index of the central contact diametrically opposite `k`.
int opposite_central(int k);

struct CuffLayout {
  double inner_diameter_um = 3000.0;
  std::array<double, kCentralContacts> central_angles_deg{0.0, 60.0, 120.0, 180.0, 240.0, 300.0};
  double distal_offset_um = 4000.0;
  double proximal_offset_um = -4000.0;

  bool operator==(const CuffLayout&) const = default;

  /// Throws DomainError when contacts are not evenly spaced at (k-1)*60 deg,
  /// the ring offsets are not symmetric about 0, or the diameter is not positive.
  void validate() const;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

double distance(const Point3& a, const Point3& b);

/// Contact centre on the cuff cylinder; z is the axial coordinate.
Point3 contact_position(const CuffLayout& layout, const ContactId& id);

/// Signed per-contact fraction of the stimulation current; cathodic weights
/// are negative. Contacts not present carry weight 0.
class CurrentPattern {
 public:
  CurrentPattern() = default;
  explicit CurrentPattern(std::map<ContactId, Fraction> weights);

  Fraction weight(const ContactId& id) const;
  const std::map<ContactId, Fraction>& weights() const { return weights_; }
  Fraction sum() const;

  /// Relabels Central(k) -> Central(k + steps), wrapping modulo 6.
  CurrentPattern rotated(int steps) const;

  bool operator==(const CurrentPattern&) const = default;

 private:
  std::map<ContactId, Fraction> weights_;  // zero weights are not stored
};

/// Cathode on Central(k), 1/3 of the current returned on each ring and on
/// the opposite central contact. Throws DomainError unless 1 <= k <= 6.
CurrentPattern make_str_pattern(int k);

/// Tripolar ring convention: -1/6 on every central contact, +1/2 on each ring.
CurrentPattern make_ring_pattern();

struct StimConfig {
  enum class Kind : std::uint8_t { Ring, Str };

  Kind kind = Kind::Ring;
  int str_index = 0;  // 1..6 for Str
  CurrentPattern pattern;

  static StimConfig ring();
  static StimConfig str(int k);

  /// 0 for the ring configuration, k for STR k.
  int ordinal() const { return kind == Kind::Ring ? 0 : str_index; }
  /// "RING" or "STR<k>".
  std::string name() const;
  /// Polar angle of the cathode for STR configurations.
  std::optional<double> angle_deg() const;

  static StimConfig from_name(const std::string& name);

  bool operator==(const StimConfig&) const = default;
};

/// RING, STR1..STR6 in ordinal order.
std::vector<StimConfig> all_configs();

struct PatternRow {
  std::string contact;
  std::int64_t numerator;
  std::int64_t denominator;
};

/// Non-zero weights as (contact, numerator, denominator) rows in contact order.
std::vector<PatternRow> pattern_table(const CurrentPattern& pattern);

}  // namespace cuffbench
