#include "isclab/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "isclab/errors.hpp"
#include "isclab/rng.hpp"

namespace isclab {

namespace {

using nlohmann::json;

double object_hash_unit(std::uint32_t page_id, std::uint32_t object_id, std::uint32_t salt,
                        std::string_view tag) {
  return hash_unit(page_id, (static_cast<std::uint64_t>(object_id) << 20) | salt, tag);
}

// Stable per-object arrival offsets: the request lands early in the window,
// its segments follow spread over the remainder.
double request_offset(const WebPageSpec& page, const ObjectSpec& obj, double window) {
  return object_hash_unit(page.page_id, obj.object_id, 0, "req-off") * 0.30 * window;
}

double segment_offset(const WebPageSpec& page, const ObjectSpec& obj, std::uint32_t seg,
                      double window) {
  const double req = request_offset(page, obj, window);
  const double n = static_cast<double>(obj.response_segments.size());
  const double frac =
      (static_cast<double>(seg) + 1.0 + 0.5 * object_hash_unit(page.page_id, obj.object_id,
                                                               seg + 1, "seg-off")) /
      (n + 2.0);
  return req + (0.98 * window - req) * frac;
}

}  // namespace

void CorpusParams::validate() const {
  if (min_segment_bytes <= 100 || max_segment_bytes <= 100)
    throw ConfigError("segment sizes must exceed 100 bytes");
  if (min_request_bytes <= 100 || max_request_bytes <= 100)
    throw ConfigError("request sizes must exceed 100 bytes");
  if (min_segment_bytes > max_segment_bytes || min_request_bytes > max_request_bytes)
    throw ConfigError("size range inverted");
  if (min_objects < 1 || min_objects > max_objects)
    throw ConfigError("object count range invalid");
  if (min_segments < 1 || min_segments > max_segments)
    throw ConfigError("segment count range invalid");
  for (double p : {text_probability, suspicious_probability, loggable_probability,
                   dynamic_fraction})
    if (p < 0.0 || p > 1.0) throw ConfigError("probability outside [0,1]");
  if (render_window_s <= 0.0) throw ConfigError("render window must be positive");
}

const WebPageSpec& Corpus::page(std::uint32_t page_id) const {
  for (const WebPageSpec& p : pages)
    if (p.page_id == page_id) return p;
  throw ConfigError("unknown page_id " + std::to_string(page_id));
}

std::uint64_t Corpus::max_payload_bytes() const {
  // Upper bound over static sizes and the dynamic redraw range.
  std::uint64_t m = std::max(params.max_segment_bytes, params.max_request_bytes);
  for (const WebPageSpec& p : pages)
    for (const ObjectSpec& o : p.objects) {
      m = std::max(m, o.request_bytes);
      for (std::uint64_t s : o.response_segments) m = std::max(m, s);
    }
  return m;
}

Corpus generate_corpus(std::uint64_t seed, std::uint32_t n_pages, const CorpusParams& params) {
  if (n_pages < 1) throw ConfigError("n_pages must be >= 1");
  params.validate();
  if (params.tracked_count > n_pages)
    throw ConfigError("tracked_count exceeds page count");

  SplitMix64 rng(derive_seed(seed, "corpus"));
  Corpus corpus;
  corpus.seed = seed;
  corpus.params = params;
  corpus.pages.reserve(n_pages);

  for (std::uint32_t pid = 0; pid < n_pages; ++pid) {
    WebPageSpec page;
    page.page_id = pid;
    page.dynamic_fraction = params.dynamic_fraction;

    const std::uint32_t n_objects =
        static_cast<std::uint32_t>(rng.range(params.min_objects, params.max_objects));
    for (std::uint32_t oid = 0; oid < n_objects; ++oid) {
      ObjectSpec obj;
      obj.object_id = oid;
      obj.request_bytes = rng.range(params.min_request_bytes, params.max_request_bytes);
      const std::uint32_t n_segs =
          static_cast<std::uint32_t>(rng.range(params.min_segments, params.max_segments));
      obj.response_segments.reserve(n_segs);
      for (std::uint32_t s = 0; s < n_segs; ++s)
        obj.response_segments.push_back(
            rng.range(params.min_segment_bytes, params.max_segment_bytes));
      obj.content_class = rng.chance(params.text_probability) ? ContentClass::Text
                                                              : ContentClass::Image;
      obj.suspicious = rng.chance(params.suspicious_probability);
      obj.loggable = rng.chance(params.loggable_probability);
      // A page with no constant object is untrackable; pin the first one.
      obj.constant = oid == 0 ? true : !rng.chance(params.dynamic_fraction);
      page.objects.push_back(std::move(obj));
    }
    corpus.pages.push_back(std::move(page));
  }

  std::vector<std::uint32_t> ids(n_pages);
  for (std::uint32_t i = 0; i < n_pages; ++i) ids[i] = i;
  rng.shuffle(ids);
  ids.resize(params.tracked_count);
  std::sort(ids.begin(), ids.end());
  corpus.tracked_ids = std::move(ids);
  return corpus;
}

std::vector<PacketGroundTruth> render_visit(const WebPageSpec& page, std::uint64_t visit_seed,
                                            double start_time, const CorpusParams& params) {
  if (page.objects.empty()) throw ConfigError("page has no objects");
  const double window = params.render_window_s;
  SplitMix64 rng(derive_seed(visit_seed, "render", page.page_id));

  std::vector<PacketGroundTruth> packets;
  for (const ObjectSpec& obj : page.objects) {
    PacketGroundTruth req;
    req.page_id = page.page_id;
    req.object_id = obj.object_id;
    req.kind = PacketKind::Request;
    req.payload_bytes = obj.request_bytes;
    req.content_class = obj.content_class;
    req.suspicious = false;  // suspicion is a response-content property
    req.loggable = false;
    req.constant = true;  // request sizes never change between visits
    req.arrival_time = start_time + request_offset(page, obj, window);
    packets.push_back(req);

    for (std::uint32_t s = 0; s < obj.response_segments.size(); ++s) {
      PacketGroundTruth seg;
      seg.page_id = page.page_id;
      seg.object_id = obj.object_id;
      seg.kind = PacketKind::ResponseSegment;
      seg.content_class = obj.content_class;
      seg.suspicious = obj.suspicious;
      seg.loggable = obj.loggable;
      seg.constant = obj.constant;
      if (obj.constant) {
        seg.payload_bytes = obj.response_segments[s];
        seg.arrival_time = start_time + segment_offset(page, obj, s, window);
      } else {
        seg.payload_bytes = rng.range(params.min_segment_bytes, params.max_segment_bytes);
        const double req_off = request_offset(page, obj, window);
        seg.arrival_time = start_time + req_off + (0.98 * window - req_off) * rng.unit();
      }
      packets.push_back(seg);
    }
  }

  std::stable_sort(packets.begin(), packets.end(),
                   [](const PacketGroundTruth& a, const PacketGroundTruth& b) {
                     return a.arrival_time < b.arrival_time;
                   });
  for (std::size_t i = 0; i < packets.size(); ++i) packets[i].packet_uid = i;
  return packets;
}

SessionStream interleave_sessions(const Corpus& corpus, const std::vector<VisitPlanEntry>& plan,
                                  std::uint64_t seed) {
  SessionStream session;
  for (std::size_t v = 0; v < plan.size(); ++v) {
    const WebPageSpec& page = corpus.page(plan[v].page_id);
    std::vector<PacketGroundTruth> visit = render_visit(
        page, derive_seed(seed, "visit", v), plan[v].start_time, corpus.params);
    for (PacketGroundTruth& p : visit) {
      p.packet_uid = (static_cast<std::uint64_t>(v) << 24) | p.packet_uid;
      session.packets.push_back(std::move(p));
    }
  }
  std::stable_sort(session.packets.begin(), session.packets.end(),
                   [](const PacketGroundTruth& a, const PacketGroundTruth& b) {
                     return a.arrival_time < b.arrival_time;
                   });
  return session;
}

namespace {

json object_to_json(const ObjectSpec& o) {
  return json{{"object_id", o.object_id},
              {"request_bytes", o.request_bytes},
              {"response_segments", o.response_segments},
              {"content_class", o.content_class == ContentClass::Text ? "text" : "image"},
              {"suspicious", o.suspicious},
              {"loggable", o.loggable},
              {"constant", o.constant}};
}

ObjectSpec object_from_json(const json& j) {
  ObjectSpec o;
  o.object_id = j.at("object_id").get<std::uint32_t>();
  o.request_bytes = j.at("request_bytes").get<std::uint64_t>();
  o.response_segments = j.at("response_segments").get<std::vector<std::uint64_t>>();
  const std::string cls = j.at("content_class").get<std::string>();
  if (cls == "text")
    o.content_class = ContentClass::Text;
  else if (cls == "image")
    o.content_class = ContentClass::Image;
  else
    throw ParseError("content_class must be 'text' or 'image'");
  o.suspicious = j.at("suspicious").get<bool>();
  o.loggable = j.at("loggable").get<bool>();
  o.constant = j.at("constant").get<bool>();
  return o;
}

json params_to_json(const CorpusParams& p) {
  return json{{"tracked_count", p.tracked_count},
              {"min_objects", p.min_objects},
              {"max_objects", p.max_objects},
              {"min_segments", p.min_segments},
              {"max_segments", p.max_segments},
              {"min_segment_bytes", p.min_segment_bytes},
              {"max_segment_bytes", p.max_segment_bytes},
              {"min_request_bytes", p.min_request_bytes},
              {"max_request_bytes", p.max_request_bytes},
              {"text_probability", p.text_probability},
              {"suspicious_probability", p.suspicious_probability},
              {"loggable_probability", p.loggable_probability},
              {"dynamic_fraction", p.dynamic_fraction},
              {"render_window_s", p.render_window_s}};
}

CorpusParams params_from_json(const json& j) {
  CorpusParams p;
  p.tracked_count = j.at("tracked_count").get<std::uint32_t>();
  p.min_objects = j.at("min_objects").get<std::uint32_t>();
  p.max_objects = j.at("max_objects").get<std::uint32_t>();
  p.min_segments = j.at("min_segments").get<std::uint32_t>();
  p.max_segments = j.at("max_segments").get<std::uint32_t>();
  p.min_segment_bytes = j.at("min_segment_bytes").get<std::uint64_t>();
  p.max_segment_bytes = j.at("max_segment_bytes").get<std::uint64_t>();
  p.min_request_bytes = j.at("min_request_bytes").get<std::uint64_t>();
  p.max_request_bytes = j.at("max_request_bytes").get<std::uint64_t>();
  p.text_probability = j.at("text_probability").get<double>();
  p.suspicious_probability = j.at("suspicious_probability").get<double>();
  p.loggable_probability = j.at("loggable_probability").get<double>();
  p.dynamic_fraction = j.at("dynamic_fraction").get<double>();
  p.render_window_s = j.at("render_window_s").get<double>();
  return p;
}

}  // namespace

void write_corpus_json(const Corpus& corpus, std::ostream& out) {
  json pages = json::array();
  for (const WebPageSpec& p : corpus.pages) {
    json objs = json::array();
    for (const ObjectSpec& o : p.objects) objs.push_back(object_to_json(o));
    pages.push_back(json{{"page_id", p.page_id},
                         {"dynamic_fraction", p.dynamic_fraction},
                         {"objects", std::move(objs)}});
  }
  json doc{{"format", "ISCCORPUS 1"},
           {"seed", corpus.seed},
           {"params", params_to_json(corpus.params)},
           {"tracked_ids", corpus.tracked_ids},
           {"pages", std::move(pages)}};
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("corpus write failed");
}

Corpus read_corpus_json(std::istream& in) {
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("corpus JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "ISCCORPUS 1")
      throw ParseError("unsupported corpus format");
    Corpus corpus;
    corpus.seed = doc.at("seed").get<std::uint64_t>();
    corpus.params = params_from_json(doc.at("params"));
    corpus.tracked_ids = doc.at("tracked_ids").get<std::vector<std::uint32_t>>();
    for (const json& jp : doc.at("pages")) {
      WebPageSpec page;
      page.page_id = jp.at("page_id").get<std::uint32_t>();
      page.dynamic_fraction = jp.at("dynamic_fraction").get<double>();
      for (const json& jo : jp.at("objects")) page.objects.push_back(object_from_json(jo));
      corpus.pages.push_back(std::move(page));
    }
    return corpus;
  } catch (const json::exception& e) {
    throw ParseError(std::string("corpus JSON: ") + e.what());
  }
}

void write_session_csv(const SessionStream& session, std::ostream& out) {
  out << "packet_uid,page_id,object_id,kind,bytes,class,suspicious,loggable,constant,"
         "arrival_time\n";
  char line[256];
  for (const PacketGroundTruth& p : session.packets) {
    std::snprintf(line, sizeof line, "%llu,%u,%u,%s,%llu,%s,%d,%d,%d,%.6f\n",
                  static_cast<unsigned long long>(p.packet_uid), p.page_id, p.object_id,
                  p.kind == PacketKind::Request ? "request" : "response-segment",
                  static_cast<unsigned long long>(p.payload_bytes),
                  p.content_class == ContentClass::Text ? "text" : "image",
                  p.suspicious ? 1 : 0, p.loggable ? 1 : 0, p.constant ? 1 : 0, p.arrival_time);
    out << line;
  }
  if (!out) throw IoError("session write failed");
}

SessionStream read_session_csv(std::istream& in) {
  SessionStream session;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty session stream", 1, 1);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      std::size_t end = comma == std::string::npos ? line.size() : comma;
      fields.emplace_back(line.substr(pos, end - pos));
      pos = comma == std::string::npos ? line.size() + 1 : comma + 1;
    }
    if (fields.size() != 10) throw ParseError("expected 10 fields", line_no, 1);
    PacketGroundTruth p;
    p.packet_uid = std::stoull(fields[0]);
    p.page_id = static_cast<std::uint32_t>(std::stoul(fields[1]));
    p.object_id = static_cast<std::uint32_t>(std::stoul(fields[2]));
    if (fields[3] == "request")
      p.kind = PacketKind::Request;
    else if (fields[3] == "response-segment")
      p.kind = PacketKind::ResponseSegment;
    else
      throw ParseError("bad kind '" + fields[3] + "'", line_no, 1);
    p.payload_bytes = std::stoull(fields[4]);
    if (fields[5] == "text")
      p.content_class = ContentClass::Text;
    else if (fields[5] == "image")
      p.content_class = ContentClass::Image;
    else
      throw ParseError("bad class '" + fields[5] + "'", line_no, 1);
    p.suspicious = fields[6] == "1";
    p.loggable = fields[7] == "1";
    p.constant = fields[8] == "1";
    p.arrival_time = std::stod(fields[9]);
    session.packets.push_back(std::move(p));
  }
  return session;
}

}  // namespace isclab
