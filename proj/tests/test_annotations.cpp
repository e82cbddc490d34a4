#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "lungpipe/annotations.hpp"
#include "lungpipe/error.hpp"

using namespace lungpipe;

namespace {

std::string session(const std::string& reader, const std::string& nodules) {
  return "<readingSession><servicingRadiologistID>" + reader + "</servicingRadiologistID>" + nodules +
         "</readingSession>";
}

std::string nodule(const std::string& id, const std::string& malignancy, double z = 1, double x = 2,
                   double y = 3) {
  std::ostringstream s;
  s << "<unblindedReadNodule><noduleID>" << id << "</noduleID>";
  if (!malignancy.empty()) s << "<characteristics><malignancy>" << malignancy << "</malignancy></characteristics>";
  s << "<roi><imageZposition>" << z << "</imageZposition><edgeMap><xCoord>" << x << "</xCoord><yCoord>" << y
    << "</yCoord></edgeMap></roi></unblindedReadNodule>";
  return s.str();
}

std::string document(const std::string& body) {
  return "<LidcReadMessage><ResponseHeader><SeriesInstanceUid>scan1</SeriesInstanceUid></ResponseHeader>" + body +
         "</LidcReadMessage>";
}

}  // namespace

TEST(ParseXml, TwoReadersOneNoduleEach) {
  const auto reads = parse_lidc_xml(document(session("a", nodule("n1", "4")) + session("b", nodule("n1", "5"))));
  ASSERT_EQ(reads.size(), 2u);
  EXPECT_EQ(reads[0].malignancy, 4);
  EXPECT_EQ(reads[1].malignancy, 5);
  EXPECT_EQ(reads[0].reader_id, "a");
  EXPECT_EQ(reads[1].scan_id, "scan1");
  EXPECT_EQ(reads[0].centroid_world, (Vec3{1, 3, 2}));
}

TEST(ParseXml, NoduleWithoutCharacteristicsSkipped) {
  EXPECT_TRUE(parse_lidc_xml(document(session("a", nodule("n1", "")))).empty());
}

TEST(ParseXml, Errors) {
  EXPECT_THROW(parse_lidc_xml("<LidcReadMessage><readingSession></LidcReadMessage>"), ParseError);
  EXPECT_THROW(parse_lidc_xml(document(session("a", nodule("n1", "6")))), ValidationError);
  EXPECT_THROW(parse_lidc_xml(document(session("a", nodule("n1", "0")))), ValidationError);
  EXPECT_THROW(parse_lidc_xml(document(session("a", nodule("n1", "four")))), ParseError);
  EXPECT_THROW(parse_lidc_xml("<LidcReadMessage></LidcReadMessage>"), ParseError);
  try {
    parse_lidc_xml("<a>\n<b>\n</a>");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  }
}

TEST(ParseXml, HandWrittenFixture) {
  const auto reads = parse_lidc_xml_file(std::string(LUNGPIPE_FIXTURES) + "/four_readers.xml");
  const std::string s = "1.2.3.fixture";
  const Vec3 a{-50, -19, -49}, b{-80, -67.5, 52.5}, c{-20, -89, -78.5};
  const std::vector<RadiologistRead> expected = {
      {s, "R1", "r1-A", a, 4}, {s, "R1", "r1-B", b, 2}, {s, "R1", "r1-C", c, 5},
      {s, "R2", "r2-A", a, 5}, {s, "R2", "r2-B", b, 1}, {s, "R3", "r3-A", a, 4},
      {s, "R3", "r3-C", c, 5}, {s, "R4", "r4-B", b, 3}, {s, "R4", "r4-C", c, 4},
  };
  EXPECT_EQ(reads, expected);
}

TEST(Consolidate, FixtureTable) {
  const auto reads = parse_lidc_xml_file(std::string(LUNGPIPE_FIXTURES) + "/four_readers.xml");
  std::ifstream in(std::string(LUNGPIPE_FIXTURES) + "/four_readers_reference.csv");
  const auto ref = parse_reference_csv(in);
  ASSERT_EQ(ref.size(), 4u);
  const auto out = consolidate(reads, ref);
  ASSERT_EQ(out.annotations.size(), 3u);
  EXPECT_DOUBLE_EQ(out.annotations[0].mean_score, 13.0 / 3.0);
  EXPECT_DOUBLE_EQ(out.annotations[1].mean_score, 2.0);
  EXPECT_DOUBLE_EQ(out.annotations[2].mean_score, 14.0 / 3.0);
  EXPECT_TRUE(out.unmatched.empty());
}

TEST(Consolidate, FourReadsAveraged) {
  std::vector<RadiologistRead> reads;
  const int scores[] = {4, 5, 5, 4};
  for (int i = 0; i < 4; ++i)
    reads.push_back({"s", "r" + std::to_string(i), "n", Vec3{10.0 + 0.4 * i, 20, 30}, scores[i]});
  const std::vector<ReferenceNodule> ref = {{"s", {10.5, 20, 30}, 10.0}};
  const auto out = consolidate(reads, ref);
  ASSERT_EQ(out.annotations.size(), 1u);
  EXPECT_DOUBLE_EQ(out.annotations[0].mean_score, 4.5);
  reads.resize(2);
  EXPECT_TRUE(consolidate(reads, ref).annotations.empty());
}

TEST(Consolidate, MatchesBruteForceOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(-150, 150), jitter(-3, 3), diam(4, 30);
  std::uniform_int_distribution<int> score(1, 5), nscans(0, 4);
  std::bernoulli_distribution reads_it(0.7), spurious(0.1);
  std::vector<ReferenceNodule> ref;
  std::vector<RadiologistRead> reads;
  for (int i = 0; i < 50; ++i) {
    const std::string scan = "scan" + std::to_string(nscans(rng));
    ref.push_back({scan, {pos(rng), pos(rng), pos(rng)}, diam(rng)});
    for (int r = 0; r < 4; ++r) {
      if (!reads_it(rng)) continue;
      const Vec3 c = ref.back().center_world + Vec3{jitter(rng), jitter(rng), jitter(rng)};
      reads.push_back({scan, "reader" + std::to_string(r), "n" + std::to_string(reads.size()), c, score(rng)});
      if (spurious(rng))
        reads.push_back({scan, "reader" + std::to_string(r), "x" + std::to_string(reads.size()),
                         c + Vec3{jitter(rng), 0, 0}, score(rng)});
    }
  }
  std::shuffle(reads.begin(), reads.end(), rng);
  const auto out = consolidate(reads, ref);

  // Oracle: all read/reference pairs; each read goes to its nearest reference within radius,
  // then each (reference, reader) keeps its closest read.
  std::vector<int> owner(reads.size(), -1);
  for (std::size_t i = 0; i < reads.size(); ++i) {
    double best = 1e300;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (ref[j].scan_id != reads[i].scan_id) continue;
      const double d = (reads[i].centroid_world - ref[j].center_world).norm();
      if (d < ref[j].diameter_mm / 2 && d < best) best = d, owner[i] = int(j);
    }
  }
  std::vector<std::pair<std::size_t, double>> expected;  // reference index, mean
  std::size_t unmatched = 0;
  for (int o : owner) unmatched += o < 0;
  for (std::size_t j = 0; j < ref.size(); ++j) {
    std::map<std::string, std::size_t> per_reader;
    for (std::size_t i = 0; i < reads.size(); ++i) {
      if (owner[i] != int(j)) continue;
      auto it = per_reader.find(reads[i].reader_id);
      const double d = (reads[i].centroid_world - ref[j].center_world).norm();
      if (it == per_reader.end() || d < (reads[it->second].centroid_world - ref[j].center_world).norm())
        per_reader[reads[i].reader_id] = i;
    }
    if (per_reader.size() < 3) continue;
    double sum = 0;
    for (auto& [r, i] : per_reader) sum += reads[i].malignancy;
    expected.emplace_back(j, sum / double(per_reader.size()));
  }
  ASSERT_EQ(out.annotations.size(), expected.size());
  ASSERT_GT(expected.size(), 10u);
  for (std::size_t k = 0; k < expected.size(); ++k) {
    EXPECT_EQ(out.annotations[k].centroid_world, ref[expected[k].first].center_world);
    EXPECT_DOUBLE_EQ(out.annotations[k].mean_score, expected[k].second);
  }
  EXPECT_EQ(out.unmatched.size(), unmatched);
}

TEST(AssignClass, Examples) {
  EXPECT_EQ(assign_class(1.33, Scheme::S145), MalignancyClass::C1);
  EXPECT_FALSE(assign_class(3.4, Scheme::S145));
  EXPECT_FALSE(assign_class(3.4, Scheme::S1and245));
  EXPECT_EQ(assign_class(4.5, Scheme::S1and245), MalignancyClass::C5);
  EXPECT_EQ(assign_class(4.5, Scheme::S145), MalignancyClass::C5);
  EXPECT_FALSE(assign_class(2.0, Scheme::S145));
  EXPECT_EQ(assign_class(1.5, Scheme::S1and245), MalignancyClass::C1and2);
  EXPECT_FALSE(assign_class(2.5, Scheme::S1and245));
  EXPECT_THROW(assign_class(0.99, Scheme::S145), ValidationError);
  EXPECT_THROW(assign_class(5.01, Scheme::S145), ValidationError);
}

TEST(AssignClass, PartitionOfScoreRange) {
  for (int i = 0; i <= 400; ++i) {
    const double s = 1.0 + i * 0.01;
    const int r = int(std::floor(s + 0.5));
    for (Scheme scheme : {Scheme::S145, Scheme::S1and245}) {
      const auto c = assign_class(s, scheme);
      if (!c) {
        EXPECT_TRUE(r == 3 || (r == 2 && scheme == Scheme::S145)) << s;
        continue;
      }
      const auto classes = scheme_classes(scheme);
      EXPECT_NE(std::find(classes.begin(), classes.end(), *c), classes.end());
      EXPECT_EQ(class_index(*c), r <= 2 ? 0 : r - 3);
    }
  }
}

TEST(Split, ExactStratification) {
  std::vector<std::pair<std::string, int>> items;
  for (int i = 0; i < 10; ++i) items.emplace_back("s" + std::to_string(i), i < 5 ? 0 : 1);
  const DatasetSplit split = split_stratified(items, 2, 0.6, 1);
  int train[2] = {0, 0};
  for (const auto& [s, c] : items) train[c] += split.in_train(s);
  EXPECT_EQ(train[0], 3);
  EXPECT_EQ(train[1], 3);
  EXPECT_EQ(split.train_scan_ids.size() + split.val_scan_ids.size(), 10u);
}

TEST(Split, SubjectNodulesStayTogether) {
  std::vector<std::pair<std::string, int>> items = {{"big", 0}, {"big", 1}, {"big", 2}};
  for (int i = 0; i < 12; ++i) items.emplace_back("s" + std::to_string(i), i % 3);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const DatasetSplit split = split_stratified(items, 3, 0.6, seed);
    std::set<std::string> tr(split.train_scan_ids.begin(), split.train_scan_ids.end());
    for (const auto& v : split.val_scan_ids) ASSERT_FALSE(tr.count(v)) << "seed " << seed;
    ASSERT_EQ(tr.size() + split.val_scan_ids.size(), 13u);
  }
}

TEST(Split, DeterministicPerSeed) {
  std::vector<std::pair<std::string, int>> items;
  for (int i = 0; i < 40; ++i) items.emplace_back("s" + std::to_string(i % 25), i % 3);
  const auto a = split_stratified(items, 3, 0.6, 9);
  const auto b = split_stratified(items, 3, 0.6, 9);
  EXPECT_EQ(a.train_scan_ids, b.train_scan_ids);
  EXPECT_EQ(a.val_scan_ids, b.val_scan_ids);
}

TEST(Split, TableCountsRatio) {
  // 247 subjects holding 72/213/48 class-labelled nodules.
  std::mt19937_64 rng(5);
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < (c == 0 ? 72 : c == 1 ? 213 : 48); ++i) labels.push_back(c);
  std::shuffle(labels.begin(), labels.end(), rng);
  std::vector<std::pair<std::string, int>> items;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t subject = i < 247 ? i : rng() % 247;
    items.emplace_back("subject" + std::to_string(subject), labels[i]);
  }
  const DatasetSplit split = split_stratified(items, 3, 0.6, 3);
  double train[3] = {0, 0, 0}, total = 0;
  for (const auto& [s, c] : items)
    if (split.in_train(s)) train[c] += 1, total += 1;
  const double expect[3] = {72.0 / 333, 213.0 / 333, 48.0 / 333};
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(train[c] / total, expect[c], 0.02);
  EXPECT_NEAR(total / 333.0, 0.6, 0.02);
}

TEST(Split, SingleSubjectClassWarns) {
  std::vector<std::pair<std::string, int>> items = {{"a", 0}, {"b", 0}, {"c", 0}, {"d", 1}, {"d", 1}};
  const DatasetSplit split = split_stratified(items, 2, 0.6, 0);
  EXPECT_FALSE(split.warnings.empty());
  EXPECT_EQ(split.train_scan_ids.size() + split.val_scan_ids.size(), 4u);
}

TEST(Split, LabeledNoduleOverload) {
  std::vector<LabeledNodule> nodules;
  for (int i = 0; i < 10; ++i) {
    LabeledNodule n;
    n.annotation.scan_id = "s" + std::to_string(i);
    n.cls = i < 5 ? MalignancyClass::C1 : MalignancyClass::C4;
    nodules.push_back(n);
  }
  const auto split = split_stratified(nodules, 0.6, 1);
  EXPECT_EQ(split.train_scan_ids.size(), 6u);
}

TEST(ScoreCsv, ParsesAndValidates) {
  std::istringstream ok("scan_id,reader_id,z,y,x,malignancy\ns,r1,1,2,3,4\n");
  const auto reads = parse_score_csv(ok);
  ASSERT_EQ(reads.size(), 1u);
  EXPECT_EQ(reads[0].centroid_world, (Vec3{1, 2, 3}));
  std::istringstream bad("scan_id,reader_id,z,y,x,malignancy\ns,r1,1,2,3,7\n");
  EXPECT_THROW(parse_score_csv(bad), ValidationError);
}
