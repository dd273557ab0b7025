#include "nssi/topography.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace nssi {

namespace {

const char* const kMontage[] = {
    "Fp1", "Fp2", "F7",  "F3",  "Fz",  "F4",  "F8",  "FC5", "FC1", "FC2", "FC6", "T7",  "C3",  "Cz",  "C4",  "T8",
    "TP9", "CP5", "CP1", "CP2", "CP6", "TP10", "P7", "P3",  "Pz",  "P4",  "P8",  "PO9", "O1",  "Oz",  "O2",  "PO10",
    "AF7", "AF3", "AF4", "AF8", "F5",  "F1",  "F2",  "F6",  "FT9", "FT7", "FC3", "FC4", "FT8", "FT10", "C5", "C1",
    "C2",  "C6",  "TP7", "CP3", "CPz", "CP4", "TP8", "P5",  "P1",  "P2",  "P6",  "PO7", "PO3", "POz", "PO4"};
static_assert(std::size(kMontage) == 63);

constexpr double kRing = 0.8;

// Angle (degrees from the nose, clockwise seen from above) of the ring
// electrode that closes each row.
const std::map<std::string, double>& ring_angle() {
  static const std::map<std::string, double> m = {{"Fp", 18},  {"AF", 36},  {"F", 54},  {"FT", 72}, {"T", 90},
                                                  {"TP", 108}, {"P", 126}, {"PO", 144}, {"O", 162}};
  return m;
}

const std::map<std::string, double>& midline_y() {
  static const std::map<std::string, double> m = {{"Fp", 0.8},  {"AF", 0.6}, {"F", 0.4},  {"FC", 0.2},
                                                  {"FT", 0.2},  {"C", 0.0},  {"T", 0.0},  {"CP", -0.2},
                                                  {"TP", -0.2}, {"P", -0.4}, {"PO", -0.6}, {"O", -0.8},
                                                  {"I", -1.0}};
  return m;
}

std::optional<Electrode> locate(const std::string& name) {
  std::size_t split = 0;
  while (split < name.size() && std::isalpha(static_cast<unsigned char>(name[split])) && name[split] != 'z') ++split;
  const std::string row = name.substr(0, split);
  const std::string tail = name.substr(split);
  if (row.empty() || tail.empty()) return std::nullopt;
  auto mid = midline_y().find(row);
  if (mid == midline_y().end()) return std::nullopt;
  if (tail == "z") return Electrode{name, 0.0, mid->second};
  int n = 0;
  try {
    n = std::stoi(tail);
  } catch (...) {
    return std::nullopt;
  }
  if (n <= 0) return std::nullopt;
  const double side = n % 2 == 1 ? -1.0 : 1.0;
  const int step = (n + 1) / 2;  // 1..5
  // FC and CP close on the FT / TP ring positions.
  std::string ring_row = row == "FC" ? "FT" : row == "CP" ? "TP" : row == "C" ? "T" : row;
  auto ang = ring_angle().find(ring_row);
  if (ang == ring_angle().end()) return std::nullopt;
  const double rad = ang->second * M_PI / 180.0;
  if (row == "Fp" || row == "O") {
    return Electrode{name, side * kRing * std::sin(rad), kRing * std::cos(rad)};
  }
  if (step >= 5) {  // 9 / 10 positions below the ring
    return Electrode{name, side * std::sin(rad), std::cos(rad)};
  }
  const double rx = side * kRing * std::sin(rad), ry = kRing * std::cos(rad);
  const double t = step / 4.0;
  return Electrode{name, t * rx, mid->second + t * (ry - mid->second)};
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Blue (0) -> white (0.5) -> red (1).
std::string color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  int r, g, b;
  if (v < 0.5) {
    const double t = v / 0.5;
    r = static_cast<int>(std::lround(49 + t * (255 - 49)));
    g = static_cast<int>(std::lround(54 + t * (255 - 54)));
    b = static_cast<int>(std::lround(149 + t * (255 - 149)));
  } else {
    const double t = (v - 0.5) / 0.5;
    r = static_cast<int>(std::lround(255 + t * (165 - 255)));
    g = static_cast<int>(std::lround(255 + t * (0 - 255)));
    b = static_cast<int>(std::lround(255 + t * (38 - 255)));
  }
  std::ostringstream os;
  os << '#' << std::hex << std::setfill('0') << std::setw(2) << r << std::setw(2) << g << std::setw(2) << b;
  return os.str();
}

}  // namespace

const std::vector<Electrode>& montage63() {
  static const std::vector<Electrode> table = [] {
    std::vector<Electrode> out;
    for (const char* n : kMontage) out.push_back(*locate(n));
    return out;
  }();
  return table;
}

std::optional<Electrode> find_electrode(const std::string& name) { return locate(name); }

std::vector<std::string> default_channel_names(std::size_t channels) {
  if (channels == 8) return {"F3", "F4", "C3", "Cz", "C4", "P3", "P4", "Oz"};
  std::vector<std::string> out;
  for (std::size_t c = 0; c < channels; ++c) {
    out.push_back(c < std::size(kMontage) ? std::string(kMontage[c]) : "ch" + std::to_string(c + 1));
  }
  return out;
}

std::string topography_svg(const std::vector<std::string>& names, const std::vector<double>& scores,
                           const std::string& title) {
  if (names.size() != scores.size()) throw std::invalid_argument("topography: names and scores differ in length");
  constexpr double kSize = 420, kCenter = 210, kScale = 170;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize + 160 << "\" height=\"" << kSize + 30
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"" << kCenter << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
     << "</text>\n";
  os << "<g transform=\"translate(0,20)\">\n";
  os << "<circle cx=\"" << kCenter << "\" cy=\"" << kCenter << "\" r=\"" << kScale * 1.05
     << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"2\"/>\n";
  os << "<polygon points=\"" << kCenter - 14 << ',' << kCenter - kScale * 1.05 + 1 << ' ' << kCenter << ','
     << kCenter - kScale * 1.05 - 16 << ' ' << kCenter + 14 << ',' << kCenter - kScale * 1.05 + 1
     << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"2\"/>\n";
  std::vector<std::string> unplaced;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto e = find_electrode(names[i]);
    if (!e) {
      unplaced.push_back(names[i]);
      continue;
    }
    const double cx = kCenter + kScale * e->x, cy = kCenter - kScale * e->y;
    os << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"13\" fill=\"" << color(scores[i])
       << "\" stroke=\"#222\"><title>" << xml_escape(names[i]) << ": " << scores[i] << "</title></circle>\n";
    os << "<text x=\"" << cx << "\" y=\"" << cy + 4 << "\" text-anchor=\"middle\">" << xml_escape(names[i])
       << "</text>\n";
  }
  // colour bar
  for (int k = 0; k <= 10; ++k) {
    const double v = 1.0 - k / 10.0;
    os << "<rect x=\"" << kSize + 20 << "\" y=\"" << 40 + k * 20 << "\" width=\"20\" height=\"20\" fill=\"" << color(v)
       << "\"/>\n";
    if (k % 5 == 0) os << "<text x=\"" << kSize + 46 << "\" y=\"" << 54 + k * 20 << "\">" << v << "</text>\n";
  }
  double y = 290;
  for (const auto& n : unplaced) {
    os << "<text x=\"" << kSize + 20 << "\" y=\"" << y << "\">" << xml_escape(n) << " (no position)</text>\n";
    y += 14;
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

}  // namespace nssi
