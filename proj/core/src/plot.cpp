#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "mud/experiment.hpp"

namespace mud {

namespace {

struct Series {
  std::vector<double> x, y;
};

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                         "#9467bd", "#8c564b", "#17becf"};

// Minimal line plot; y may be log-scaled. Enough for BER/throughput curves
// without an external plotting dependency.
void render_svg(const std::string& path, const std::map<std::string, Series>& series,
                const std::string& title, const std::string& ylabel, bool logy) {
  const double W = 640, H = 480, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& [name, s] : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      double yv = s.y[i];
      if (logy && yv <= 0) continue;
      if (logy) yv = std::log10(yv);
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, yv);
      ymax = std::max(ymax, yv);
    }
  }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
  }
  if (ymin > ymax) {
    ymin = 0;
    ymax = 1;
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1;
  if (ymax - ymin < 1e-12) ymax = ymin + 1;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) {
    if (logy) y = std::log10(std::max(y, 1e-300));
    return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb);
  };

  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
     << "</text>\n";
  // axes
  os << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
     << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
     << "' stroke='black'/>\n";
  os << "<text x='" << W / 2 << "' y='" << H - 12
     << "' text-anchor='middle' font-size='12'>SNR (dB)</text>\n";
  os << "<text x='16' y='" << H / 2 << "' font-size='12' transform='rotate(-90 16 " << H / 2
     << ")' text-anchor='middle'>" << ylabel << "</text>\n";
  // gridlines + tick labels
  for (int k = 0; k <= 5; ++k) {
    const double gy = ymin + (ymax - ymin) * k / 5.0;
    const double yy = H - mb - (gy - ymin) / (ymax - ymin) * (H - mt - mb);
    os << "<line x1='" << ml << "' y1='" << yy << "' x2='" << W - mr << "' y2='" << yy
       << "' stroke='#dddddd'/>\n";
    std::ostringstream lbl;
    if (logy)
      lbl << "1e" << static_cast<int>(std::round(gy));
    else
      lbl << gy;
    os << "<text x='" << ml - 6 << "' y='" << yy + 4
       << "' text-anchor='end' font-size='10'>" << lbl.str() << "</text>\n";
    const double gx = xmin + (xmax - xmin) * k / 5.0;
    os << "<text x='" << px(gx) << "' y='" << H - mb + 16
       << "' text-anchor='middle' font-size='10'>" << gx << "</text>\n";
  }
  int ci = 0;
  double ly = mt + 10;
  for (const auto& [name, s] : series) {
    const char* color = kColors[ci % 7];
    std::ostringstream pts;
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (logy && s.y[i] <= 0) continue;
      pts << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='"
       << pts.str() << "'/>\n";
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (logy && s.y[i] <= 0) continue;
      os << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i]) << "' r='3' fill='" << color
         << "'/>\n";
    }
    os << "<rect x='" << W - mr - 150 << "' y='" << ly - 8 << "' width='12' height='3' fill='"
       << color << "'/>\n";
    os << "<text x='" << W - mr - 132 << "' y='" << ly - 2 << "' font-size='11'>" << name
       << "</text>\n";
    ly += 16;
    ++ci;
  }
  os << "</svg>\n";
  std::ofstream f(path);
  require(f.good(), ErrorKind::Io, "cannot write plot: " + path);
  f << os.str();
}

}  // namespace

void plot_from_csv(const std::string& csv_path, const std::string& out_dir) {
  std::ifstream is(csv_path);
  require(is.good(), ErrorKind::Io, "cannot open metrics csv: " + csv_path);
  std::string line;
  std::getline(is, line);  // header
  std::map<std::string, Series> ber_series, thr_series;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    require(f.size() >= 9, ErrorKind::Ingestion, "malformed metrics csv row: " + line);
    const std::string key = f[0] + (f[1] == "0" ? "" : " (cell " + f[1] + ")");
    const double snr = std::stod(f[2]);
    ber_series[key].x.push_back(snr);
    ber_series[key].y.push_back(std::stod(f[6]));
    thr_series[key].x.push_back(snr);
    thr_series[key].y.push_back(std::stod(f[7]));
  }
  render_svg(out_dir + "/ber_vs_snr.svg", ber_series, "BER vs SNR", "BER", true);
  render_svg(out_dir + "/throughput_vs_snr.svg", thr_series, "Throughput vs SNR",
             "bits per channel use", false);
}

}  // namespace mud
