#include "apt/metric_hub.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "apt/common.hpp"
#include "httplib.h"

namespace apt {

namespace {

const std::vector<std::string> kSentimentDims = {"Positive", "Neutral", "Negative"};
const std::vector<std::string> kEmotionDims = {"Anger", "Disgust", "Fear", "Joy", "Neutral", "Sadness", "Surprise"};
const std::vector<std::string> kToxicityDims = {"Overall Toxicity", "Severe Toxicity", "Identity Attack",
                                                "Insult",           "Profanity",       "Threat"};
const std::vector<std::string> kNoDims;

std::string_view introduction(MetricName metric) {
  switch (metric) {
    case MetricName::sentiment:
      return "Scores of sentiment leaning of text (ranging from 0 to 1).";
    case MetricName::emotion:
      return "Scores of emotion leaning of text (ranging from 0 to 1).";
    case MetricName::toxicity:
      return "Scores of toxcity degree of text (ranging from 0 to 1).";
    case MetricName::topic:
      return "Representative words to describe the major topic of the text.";
  }
  return {};
}

}  // namespace

std::string_view to_string(MetricName metric) {
  switch (metric) {
    case MetricName::sentiment:
      return "sentiment";
    case MetricName::emotion:
      return "emotion";
    case MetricName::toxicity:
      return "toxicity";
    case MetricName::topic:
      return "topic";
  }
  return "unknown";
}

std::string_view metric_key(MetricName metric) {
  switch (metric) {
    case MetricName::sentiment:
      return "Sentiment";
    case MetricName::emotion:
      return "Emotion";
    case MetricName::toxicity:
      return "Toxicity";
    case MetricName::topic:
      return "Topic";
  }
  return "Unknown";
}

MetricName parse_metric_name(std::string_view name) {
  for (auto m : kAllMetrics) {
    if (iequals(name, to_string(m))) return m;
  }
  throw UsageError("unknown metric \"" + std::string(name) + "\" (expected sentiment, emotion, toxicity or topic)");
}

std::vector<MetricName> parse_metric_list(const std::vector<std::string>& names) {
  std::vector<MetricName> out;
  for (const auto& n : names) {
    const auto m = parse_metric_name(n);
    if (std::find(out.begin(), out.end(), m) != out.end()) throw UsageError("metric listed twice: " + n);
    out.push_back(m);
  }
  return out;
}

const std::vector<std::string>& dimension_names(MetricName metric) {
  switch (metric) {
    case MetricName::sentiment:
      return kSentimentDims;
    case MetricName::emotion:
      return kEmotionDims;
    case MetricName::toxicity:
      return kToxicityDims;
    case MetricName::topic:
      return kNoDims;
  }
  return kNoDims;
}

std::vector<double> MetricVector::numeric_features() const {
  if (metric != MetricName::topic) return scores;
  double total = 0.0;
  for (const auto& k : keywords) total += static_cast<double>(k.size());
  const double n = static_cast<double>(keywords.size());
  return {n, n > 0 ? total / n : 0.0};
}

MetricVector score_vector_from_json(MetricName metric, const nlohmann::json& named, std::string_view context) {
  const std::string where(context);
  if (metric == MetricName::topic) throw ContractError(where + ": topic is not a score metric");
  if (!named.is_object()) throw ContractError(where + ": " + std::string(to_string(metric)) + " must be an object");
  const auto& dims = dimension_names(metric);
  if (named.size() != dims.size()) {
    throw ContractError(where + ": " + std::string(to_string(metric)) + " has " + std::to_string(named.size()) +
                        " dimensions, expected " + std::to_string(dims.size()));
  }
  MetricVector v{metric, {}, {}};
  for (const auto& d : dims) {
    auto it = named.find(d);
    if (it == named.end()) throw ContractError(where + ": " + std::string(to_string(metric)) + " lacks \"" + d + "\"");
    if (!it->is_number()) throw ContractError(where + ": dimension \"" + d + "\" is not a number");
    const double x = it->get<double>();
    if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
      throw DataError(where + ": dimension \"" + d + "\" score " + format_fixed(std::isfinite(x) ? x : 0.0, 4) +
                      " outside [0,1]");
    }
    v.scores.push_back(x);
  }
  return v;
}

MetricVector topic_vector(std::vector<std::string> keywords, std::string_view context) {
  if (keywords.empty() || keywords.size() > kMaxTopicKeywords) {
    throw ContractError(std::string(context) + ": topic needs 1 to " + std::to_string(kMaxTopicKeywords) +
                        " keywords, got " + std::to_string(keywords.size()));
  }
  for (const auto& k : keywords) {
    if (trim(k).empty()) throw ContractError(std::string(context) + ": empty topic keyword");
  }
  return MetricVector{MetricName::topic, {}, std::move(keywords)};
}

nlohmann::ordered_json vector_to_json(const MetricVector& v) {
  if (v.metric == MetricName::topic) return nlohmann::ordered_json(v.keywords);
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  const auto& dims = dimension_names(v.metric);
  for (std::size_t i = 0; i < dims.size(); ++i) out[dims[i]] = v.scores[i];
  return out;
}

namespace {

MetricVector vector_from_json(MetricName metric, const nlohmann::json& value, const std::string& context) {
  if (metric != MetricName::topic) return score_vector_from_json(metric, value, context);
  const nlohmann::json* list = &value;
  if (value.is_object() && value.contains("Words")) list = &value["Words"];
  if (!list->is_array()) throw ContractError(context + ": topic must be a keyword list");
  std::vector<std::string> words;
  for (const auto& w : *list) {
    if (!w.is_string()) throw ContractError(context + ": topic keyword is not a string");
    words.push_back(w.get<std::string>());
  }
  return topic_vector(std::move(words), context);
}

}  // namespace

std::string_view to_string(MetricProvenance p) {
  switch (p) {
    case MetricProvenance::precomputed:
      return "precomputed";
    case MetricProvenance::service:
      return "service";
    case MetricProvenance::stub:
      return "stub";
  }
  return "unknown";
}

void MetricTable::put(const std::string& id, MetricVector vector, MetricProvenance provenance) {
  auto& row = rows_[id];
  const auto metric = vector.metric;
  if (row.count(metric)) {
    throw DataError("record \"" + id + "\" already has a " + std::string(to_string(metric)) + " vector");
  }
  row.emplace(metric, Entry{std::move(vector), provenance});
}

const MetricVector* MetricTable::find(const std::string& id, MetricName metric) const {
  auto r = rows_.find(id);
  if (r == rows_.end()) return nullptr;
  auto e = r->second.find(metric);
  return e == r->second.end() ? nullptr : &e->second.vector;
}

const MetricVector& MetricTable::at(const std::string& id, MetricName metric) const {
  const auto* v = find(id, metric);
  if (!v) throw DataError("no " + std::string(to_string(metric)) + " vector for record \"" + id + "\"");
  return *v;
}

std::optional<MetricProvenance> MetricTable::provenance(const std::string& id, MetricName metric) const {
  auto r = rows_.find(id);
  if (r == rows_.end()) return std::nullopt;
  auto e = r->second.find(metric);
  if (e == r->second.end()) return std::nullopt;
  return e->second.provenance;
}

std::vector<std::string> MetricTable::missing(const std::vector<std::string>& ids,
                                              std::span<const MetricName> metrics) const {
  std::vector<std::string> out;
  for (const auto& id : ids) {
    for (auto m : metrics) {
      if (!find(id, m)) {
        out.push_back(id);
        break;
      }
    }
  }
  return out;
}

void MetricTable::require_coverage(const std::vector<std::string>& ids, std::span<const MetricName> metrics) const {
  const auto gaps = missing(ids, metrics);
  if (gaps.empty()) return;
  std::vector<std::string> shown(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(gaps.size(), 20)));
  std::string msg = "metric table misses configured metrics for " + std::to_string(gaps.size()) + " record(s): " +
                    join(shown, ", ");
  if (gaps.size() > shown.size()) msg += ", ...";
  throw DataError(msg);
}

nlohmann::ordered_json MetricTable::to_json() const {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& [id, metrics] : rows_) {
    nlohmann::ordered_json row;
    row["id"] = id;
    nlohmann::ordered_json prov = nlohmann::ordered_json::object();
    for (const auto& [m, e] : metrics) {
      row[std::string(to_string(m))] = vector_to_json(e.vector);
      prov[std::string(to_string(m))] = std::string(to_string(e.provenance));
    }
    row["provenance"] = prov;
    rows.push_back(std::move(row));
  }
  return rows;
}

MetricTable MetricTable::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw DataError("metric table snapshot must be an array");
  MetricTable table;
  for (const auto& row : j) {
    const auto id = row.at("id").get<std::string>();
    for (auto m : kAllMetrics) {
      const std::string name(to_string(m));
      if (!row.contains(name)) continue;
      auto prov = MetricProvenance::precomputed;
      if (row.contains("provenance") && row["provenance"].contains(name)) {
        const auto p = row["provenance"][name].get<std::string>();
        prov = p == "stub" ? MetricProvenance::stub : p == "service" ? MetricProvenance::service
                                                                      : MetricProvenance::precomputed;
      }
      table.put(id, vector_from_json(m, row[name], "record \"" + id + "\""), prov);
    }
  }
  return table;
}

MetricTable load_precomputed(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open metrics file " + path.string());
  MetricTable table;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    const auto row = nlohmann::json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object()) throw DataError(where + ": not a JSON object");
    if (!row.contains("id")) throw DataError(where + ": missing \"id\"");
    std::string id;
    if (row["id"].is_string()) {
      id = row["id"].get<std::string>();
    } else if (row["id"].is_number_integer()) {
      id = std::to_string(row["id"].get<std::int64_t>());
    } else {
      throw DataError(where + ": \"id\" must be a string or integer");
    }
    if (!seen.insert(id).second) throw DataError(where + ": duplicate id \"" + id + "\"");
    for (auto m : kAllMetrics) {
      const std::string name(to_string(m));
      if (!row.contains(name)) continue;
      try {
        table.put(id, vector_from_json(m, row[name], "record \"" + id + "\""), MetricProvenance::precomputed);
      } catch (const ContractError& e) {
        throw DataError(where + ": " + e.what());
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
    }
  }
  return table;
}

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",     "about", "after", "all",   "also",  "am",    "an",    "and",   "any",   "are",   "as",    "at",
      "be",    "been",  "but",   "by",    "can",   "could", "did",   "do",    "does",  "for",   "from",  "had",
      "has",   "have",  "he",    "her",   "him",   "his",   "how",   "i",     "if",    "in",    "into",  "is",
      "it",    "its",   "just",  "me",    "more",  "my",    "no",    "not",   "of",    "on",    "one",   "or",
      "our",   "out",   "she",   "so",    "some",  "than",  "that",  "the",   "their", "them",  "then",  "there",
      "these", "they",  "this",  "to",    "up",    "us",    "was",   "we",    "were",  "what",  "when",  "which",
      "who",   "will",  "with",  "would", "you",   "your",  "s",     "t",     "rt",    "via",   "very",  "too"};
  return words;
}

const std::unordered_set<std::string>& positive_words() {
  static const std::unordered_set<std::string> words = {
      "good", "great", "love", "happy", "excellent", "nice", "wonderful", "best", "amazing", "glad",
      "win", "wins", "awesome", "beautiful", "fantastic", "like", "enjoy", "thanks", "perfect", "fun"};
  return words;
}

const std::unordered_set<std::string>& negative_words() {
  static const std::unordered_set<std::string> words = {
      "bad", "terrible", "hate", "sad", "awful", "worst", "angry", "poor", "fail", "fails",
      "horrible", "ugly", "wrong", "kill", "war", "crash", "loss", "disgusting", "stupid", "sick"};
  return words;
}

const std::unordered_set<std::string>& toxic_words() {
  static const std::unordered_set<std::string> words = {"idiot", "stupid", "hate", "kill", "moron",
                                                        "dumb",  "trash",  "die",  "ugly", "disgusting"};
  return words;
}

std::vector<std::string> tokens_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80 || c == '\'') {
      if (c != '\'') cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double jitter(std::string_view text, MetricName metric, std::size_t dim, std::uint64_t seed) {
  std::string key(text);
  key += '\x1f';
  key += to_string(metric);
  key += '\x1f';
  key += std::to_string(dim);
  return unit_interval(hash64(key, seed));
}

void normalize(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  for (double& x : v) x /= s;
}

}  // namespace

MetricVector stub_score(const DataRecord& record, MetricName metric, std::uint64_t seed) {
  const auto toks = tokens_of(record.text);
  if (metric == MetricName::topic) {
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> freq;  // word -> (count, first position)
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (stopwords().count(toks[i])) continue;
      auto [it, inserted] = freq.try_emplace(toks[i], 0, i);
      ++it->second.first;
    }
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second.first != b.second.first) return a.second.first > b.second.first;
      return a.second.second < b.second.second;
    });
    std::vector<std::string> words;
    for (std::size_t i = 0; i < ranked.size() && i < 5; ++i) words.push_back(ranked[i].first);
    if (words.empty()) words.push_back(toks.empty() ? "none" : toks.front());
    return MetricVector{metric, {}, std::move(words)};
  }

  std::size_t pos = 0;
  std::size_t neg = 0;
  std::size_t tox = 0;
  for (const auto& t : toks) {
    pos += positive_words().count(t);
    neg += negative_words().count(t);
    tox += toxic_words().count(t);
  }
  const double n = std::max<double>(1.0, static_cast<double>(toks.size()));
  const auto& dims = dimension_names(metric);
  std::vector<double> v(dims.size());
  for (std::size_t d = 0; d < dims.size(); ++d) v[d] = 0.1 + 0.4 * jitter(record.text, metric, d, seed);

  switch (metric) {
    case MetricName::sentiment:
      v[0] += 2.0 * static_cast<double>(pos) / n * 4.0;
      v[2] += 2.0 * static_cast<double>(neg) / n * 4.0;
      v[1] += 0.5;
      normalize(v);
      break;
    case MetricName::emotion:
      v[0] += 3.0 * static_cast<double>(tox) / n;  // anger
      v[3] += 3.0 * static_cast<double>(pos) / n;  // joy
      v[5] += 3.0 * static_cast<double>(neg) / n;  // sadness
      v[4] += 0.5;                                 // neutral
      normalize(v);
      break;
    case MetricName::toxicity: {
      const double base = std::min(1.0, 4.0 * static_cast<double>(tox) / n);
      for (std::size_t d = 0; d < v.size(); ++d) {
        const double scale = d == 0 ? 1.0 : 0.6;
        v[d] = std::clamp(scale * base + 0.1 * jitter(record.text, metric, d, seed), 0.0, 1.0);
      }
      break;
    }
    case MetricName::topic:
      break;
  }
  return MetricVector{metric, std::move(v), {}};
}

MetricServiceClient::MetricServiceClient(MetricServiceEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.batch_size == 0 || endpoint_.batch_size > 64) {
    throw UsageError("metric service batch size must be in [1, 64]");
  }
  const auto& url = endpoint_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw UsageError("metric service URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

bool MetricServiceClient::healthy() {
  httplib::Client cli(scheme_host_port_);
  cli.set_connection_timeout(endpoint_.connect_timeout_seconds);
  cli.set_read_timeout(endpoint_.read_timeout_seconds);
  auto res = cli.Get(path_prefix_ + "/v1/health");
  return res && res->status == 200;
}

nlohmann::json MetricServiceClient::post_once(const std::string& path, const std::string& body) {
  httplib::Client cli(scheme_host_port_);
  cli.set_connection_timeout(endpoint_.connect_timeout_seconds);
  cli.set_read_timeout(endpoint_.read_timeout_seconds);
  auto res = cli.Post(path_prefix_ + path, body, "application/json");
  if (!res) throw TransportError("metric service " + path + ": " + httplib::to_string(res.error()));
  const auto detail = [&] { return "metric service " + path + ": HTTP " + std::to_string(res->status) + " " +
                                   res->body.substr(0, 200); };
  if (res->status == 409) throw PreconditionError(detail());
  if (res->status == 422) throw DataError(detail());
  if (res->status == 408 || res->status == 429 || res->status >= 500) throw TransportError(detail());
  if (res->status < 200 || res->status >= 300) throw ConfigurationError(detail());
  auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_discarded()) throw ContractError("metric service " + path + ": response is not JSON");
  return j;
}

nlohmann::json MetricServiceClient::post(const std::string& path, const nlohmann::json& body) {
  const auto bytes = body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  for (int attempt = 0;; ++attempt) {
    try {
      return post_once(path, bytes);
    } catch (const TransportError& e) {
      if (attempt >= endpoint_.retry_budget) throw;
      log_warn(std::string(e.what()) + "; retrying");
      std::this_thread::sleep_for(endpoint_.retry_base_delay * (1 << attempt));
    }
  }
}

std::vector<MetricVector> MetricServiceClient::batched(MetricName metric, const std::string& path,
                                                       const std::vector<std::string>& texts,
                                                       const std::string& dataset_id) {
  std::vector<MetricVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += endpoint_.batch_size) {
    const auto end = std::min(texts.size(), start + endpoint_.batch_size);
    nlohmann::json body;
    body["texts"] = std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                             texts.begin() + static_cast<std::ptrdiff_t>(end));
    body["dataset_id"] = dataset_id;
    const auto j = post(path, body);
    if (!j.is_object() || !j.contains("vectors") || !j["vectors"].is_array()) {
      throw ContractError("metric service " + path + ": response lacks a \"vectors\" list");
    }
    if (!j.contains("model_version") || !j["model_version"].is_string()) {
      throw ContractError("metric service " + path + ": response lacks \"model_version\"");
    }
    const auto& vectors = j["vectors"];
    if (vectors.size() != end - start) {
      throw ContractError("metric service " + path + ": " + std::to_string(vectors.size()) + " vectors for " +
                          std::to_string(end - start) + " texts");
    }
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      const std::string ctx = "metric service " + path + " item " + std::to_string(start + i);
      try {
        out.push_back(vector_from_json(metric, vectors[i], ctx));
      } catch (const DataError& e) {
        throw ContractError(e.what());
      }
    }
  }
  return out;
}

std::vector<MetricVector> MetricServiceClient::score(MetricName metric, const std::vector<std::string>& texts,
                                                     const std::string& dataset_id) {
  if (metric == MetricName::topic) throw UsageError("topic vectors come from topic_infer");
  return batched(metric, "/v1/score/" + std::string(to_string(metric)), texts, dataset_id);
}

void MetricServiceClient::topic_fit(const std::string& dataset_id, const std::vector<std::string>& texts) {
  nlohmann::json body;
  body["texts"] = texts;
  body["dataset_id"] = dataset_id;
  post("/v1/topic/fit", body);
}

std::vector<MetricVector> MetricServiceClient::topic_infer(const std::string& dataset_id,
                                                           const std::vector<std::string>& texts) {
  return batched(MetricName::topic, "/v1/topic/infer", texts, dataset_id);
}

std::vector<MetricVector> fetch_from_service(MetricServiceClient& client, std::span<const DataRecord> records,
                                             MetricName metric, const std::string& dataset_id) {
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const auto& r : records) texts.push_back(r.text);
  if (metric == MetricName::topic) return client.topic_infer(dataset_id, texts);
  return client.score(metric, texts, dataset_id);
}

MetricSource parse_metric_source(std::string_view name) {
  if (iequals(name, "auto")) return MetricSource::automatic;
  if (iequals(name, "precomputed")) return MetricSource::precomputed;
  if (iequals(name, "service")) return MetricSource::service;
  if (iequals(name, "stub")) return MetricSource::stub;
  throw UsageError("unknown metrics.source \"" + std::string(name) + "\" (expected auto, precomputed, service or stub)");
}

MetricTable assemble_metric_table(const std::vector<DataRecord>& records, const MetricAssemblyOptions& options) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.id);

  std::optional<MetricTable> pre;
  const bool want_pre = options.source == MetricSource::automatic || options.source == MetricSource::precomputed;
  if (want_pre && options.precomputed_path) pre = load_precomputed(*options.precomputed_path);
  if (options.source == MetricSource::precomputed) {
    if (!pre) throw UsageError("metrics.source=precomputed needs metrics.precomputed_path");
    pre->require_coverage(ids, options.metrics);
  }

  std::optional<MetricServiceClient> client;
  const bool want_service = options.source == MetricSource::automatic || options.source == MetricSource::service;
  if (want_service && options.service) {
    client.emplace(*options.service);
    if (!client->healthy()) {
      if (options.source == MetricSource::service) {
        throw TransportError("metric service at " + options.service->base_url + " is not healthy");
      }
      log_warn("metric service unavailable; falling back to stub scores");
      client.reset();
    }
  } else if (options.source == MetricSource::service) {
    throw UsageError("metrics.source=service needs metrics.service_url");
  }

  MetricTable table;
  for (auto metric : options.metrics) {
    std::vector<const DataRecord*> pending;
    for (const auto& r : records) {
      const MetricVector* v = pre ? pre->find(r.id, metric) : nullptr;
      if (v) {
        table.put(r.id, *v, MetricProvenance::precomputed);
      } else {
        pending.push_back(&r);
      }
    }
    if (pending.empty()) continue;
    if (client) {
      std::vector<DataRecord> batch;
      for (const auto* r : pending) batch.push_back(*r);
      if (metric == MetricName::topic) {
        std::vector<std::string> corpus;
        for (const auto& r : records) corpus.push_back(r.text);
        client->topic_fit(options.dataset_id, corpus);
      }
      auto vectors = fetch_from_service(*client, batch, metric, options.dataset_id);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        table.put(batch[i].id, std::move(vectors[i]), MetricProvenance::service);
      }
    } else {
      for (const auto* r : pending) table.put(r->id, stub_score(*r, metric, options.stub_seed), MetricProvenance::stub);
    }
  }
  return table;
}

PromptFragment render_metric_fragment(const MetricVector& vector) {
  PromptFragment out = PromptFragment::object();
  out[std::string(keys::introduction)] = std::string(introduction(vector.metric));
  if (vector.metric == MetricName::topic) {
    out["Words"] = vector.keywords;
    return out;
  }
  const auto& dims = dimension_names(vector.metric);
  if (vector.scores.size() != dims.size()) throw DataError("metric vector has the wrong number of scores");
  PromptFragment scores = PromptFragment::object();
  for (std::size_t i = 0; i < dims.size(); ++i) scores[dims[i]] = std::round(vector.scores[i] * 100.0) / 100.0;
  out["Scores"] = std::move(scores);
  return out;
}

}  // namespace apt
