#include "cuffbench/electrode.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "cuffbench/errors.hpp"

namespace cuffbench {

Fraction::Fraction(std::int64_t num, std::int64_t den) {
  if (den == 0) throw DomainError("fraction with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = g == 0 ? 0 : num / g;
  den_ = g == 0 ? 1 : den / g;
}

Fraction Fraction::operator+(const Fraction& o) const {
  const std::int64_t l = std::lcm(den_, o.den_);
  return Fraction(num_ * (l / den_) + o.num_ * (l / o.den_), l);
}

std::strong_ordering Fraction::operator<=>(const Fraction& o) const {
  return num_ * o.den_ <=> o.num_ * den_;
}

std::string Fraction::str() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

ContactId ContactId::central(int k) {
  if (k < 1 || k > kCentralContacts) {
    throw DomainError("central contact index out of range 1..6: " + std::to_string(k));
  }
  return {Kind::Central, k};
}

std::string ContactId::name() const {
  switch (kind) {
    case Kind::RingDistal:
      return "RingDistal";
    case Kind::RingProximal:
      return "RingProximal";
    case Kind::Central:
      return "Central" + std::to_string(index);
  }
  return {};
}

std::optional<ContactId> ContactId::parse(const std::string& name) {
  if (name == "RingDistal") return ring_distal();
  if (name == "RingProximal") return ring_proximal();
  if (name.size() == 8 && name.starts_with("Central")) {
    const int k = name[7] - '0';
    if (k >= 1 && k <= kCentralContacts) return ContactId{Kind::Central, k};
  }
  return std::nullopt;
}

std::array<ContactId, 8> all_contacts() {
  return {ContactId::ring_distal(),  ContactId::ring_proximal(), ContactId::central(1),
          ContactId::central(2),     ContactId::central(3),      ContactId::central(4),
          ContactId::central(5),     ContactId::central(6)};
}

int opposite_central(int k) {
  if (k < 1 || k > kCentralContacts) {
    throw DomainError("central contact index out of range 1..6: " + std::to_string(k));
  }
  return ((k + 2) % kCentralContacts) + 1;
}

void CuffLayout::validate() const {
  if (!(inner_diameter_um > 0.0)) throw DomainError("cuff diameter must be positive");
  for (int k = 0; k < kCentralContacts; ++k) {
    const double expected = 60.0 * k;
    double a = std::fmod(central_angles_deg[k], 360.0);
    if (a < 0) a += 360.0;
    if (std::abs(a - expected) > 1e-9) {
      throw DomainError("central contact " + std::to_string(k + 1) + " must sit at " +
                        std::to_string(expected) + " deg");
    }
  }
  if (std::abs(distal_offset_um + proximal_offset_um) > 1e-9) {
    throw DomainError("ring offsets must be symmetric about the central plane");
  }
  if (distal_offset_um == 0.0) throw DomainError("ring offsets must be non-zero");
}

double distance(const Point3& a, const Point3& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

Point3 contact_position(const CuffLayout& layout, const ContactId& id) {
  const double r = layout.inner_diameter_um / 2.0;
  switch (id.kind) {
    case ContactId::Kind::RingDistal:
      return {0.0, 0.0, layout.distal_offset_um};
    case ContactId::Kind::RingProximal:
      return {0.0, 0.0, layout.proximal_offset_um};
    case ContactId::Kind::Central: {
      if (id.index < 1 || id.index > kCentralContacts) {
        throw DomainError("unknown contact " + id.name());
      }
      const double theta = layout.central_angles_deg[id.index - 1] * std::numbers::pi / 180.0;
      return {r * std::cos(theta), r * std::sin(theta), 0.0};
    }
  }
  throw DomainError("unknown contact kind");
}

CurrentPattern::CurrentPattern(std::map<ContactId, Fraction> weights) {
  for (auto& [id, w] : weights) {
    if (w.num() != 0) weights_.emplace(id, w);
  }
}

Fraction CurrentPattern::weight(const ContactId& id) const {
  auto it = weights_.find(id);
  return it == weights_.end() ? Fraction{} : it->second;
}

Fraction CurrentPattern::sum() const {
  Fraction total;
  for (const auto& [id, w] : weights_) total = total + w;
  return total;
}

CurrentPattern CurrentPattern::rotated(int steps) const {
  std::map<ContactId, Fraction> out;
  const int s = ((steps % kCentralContacts) + kCentralContacts) % kCentralContacts;
  for (const auto& [id, w] : weights_) {
    if (id.is_central()) {
      out.emplace(ContactId::central((id.index - 1 + s) % kCentralContacts + 1), w);
    } else {
      out.emplace(id, w);
    }
  }
  return CurrentPattern(std::move(out));
}

CurrentPattern make_str_pattern(int k) {
  const ContactId cathode = ContactId::central(k);
  const Fraction third(1, 3);
  return CurrentPattern({{cathode, Fraction(-1)},
                         {ContactId::ring_distal(), third},
                         {ContactId::ring_proximal(), third},
                         {ContactId::central(opposite_central(k)), third}});
}

CurrentPattern make_ring_pattern() {
  std::map<ContactId, Fraction> w;
  for (int k = 1; k <= kCentralContacts; ++k) w.emplace(ContactId::central(k), Fraction(-1, 6));
  w.emplace(ContactId::ring_distal(), Fraction(1, 2));
  w.emplace(ContactId::ring_proximal(), Fraction(1, 2));
  return CurrentPattern(std::move(w));
}

StimConfig StimConfig::ring() { return {Kind::Ring, 0, make_ring_pattern()}; }

StimConfig StimConfig::str(int k) { return {Kind::Str, k, make_str_pattern(k)}; }

std::string StimConfig::name() const {
  return kind == Kind::Ring ? std::string("RING") : "STR" + std::to_string(str_index);
}

std::optional<double> StimConfig::angle_deg() const {
  if (kind == Kind::Ring) return std::nullopt;
  return 60.0 * (str_index - 1);
}

StimConfig StimConfig::from_name(const std::string& name) {
  if (name == "RING") return ring();
  if (name.size() == 4 && name.starts_with("STR")) {
    const int k = name[3] - '0';
    if (k >= 1 && k <= kCentralContacts) return str(k);
  }
  throw DomainError("unknown configuration '" + name + "'");
}

std::vector<StimConfig> all_configs() {
  std::vector<StimConfig> out{StimConfig::ring()};
  for (int k = 1; k <= kCentralContacts; ++k) out.push_back(StimConfig::str(k));
  return out;
}

std::vector<PatternRow> pattern_table(const CurrentPattern& pattern) {
  std::vector<PatternRow> rows;
  for (const auto& [id, w] : pattern.weights()) rows.push_back({id.name(), w.num(), w.den()});
  return rows;
}

}  // namespace cuffbench
