#include "support.hpp"

#include <fstream>
#include <random>

#include "polypeval/backend.hpp"
#include "polypeval/prompts.hpp"
#include "polypeval/rng.hpp"

namespace testsupport {

TempDir::TempDir() {
  static std::random_device rd;
  for (;;) {
    path = fs::temp_directory_path() / ("polypeval-test-" + std::to_string(rd()) + std::to_string(rd()));
    if (fs::create_directory(path)) return;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path, ec);
}

Image solid(int w, int h, Rgb color) { return Image(w, h, color); }

Image noise_image(int w, int h, std::uint64_t seed) {
  PortableRng rng(seed);
  Image img(w, h);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

fs::path write_manifest(const fs::path& dir, int n, int size) {
  fs::create_directories(dir / "images");
  std::ofstream out(dir / "manifest.csv");
  out << "id,file,presence,class\n";
  for (int i = 0; i < n; ++i) {
    const bool polyp = i % 2 == 0;
    const PathologyClass cls = polyp ? kPolypClasses[static_cast<std::size_t>(i / 2) % kPolypClasses.size()] : PathologyClass::Normal;
    const Rgb color{static_cast<std::uint8_t>(20 + 7 * i), static_cast<std::uint8_t>(200 - 5 * i), static_cast<std::uint8_t>(i * 13 % 256)};
    char id[16];
    std::snprintf(id, sizeof id, "img%02d", i);
    const fs::path file = dir / "images" / (std::string(id) + ".png");
    write_png(solid(size, size, color), file);
    out << id << ",images/" << id << ".png," << (polyp ? 1 : 0) << "," << class_code(cls) << "\n";
  }
  return dir / "manifest.csv";
}

const std::array<std::pair<std::string, PathologyClass>, 7>& option_strings() {
  static const std::array<std::pair<std::string, PathologyClass>, 7> options = {{
      {"1. normal", PathologyClass::Normal},
      {"2. adenocarcinoma", PathologyClass::AC},
      {"3. adenomatous-tubular polyp", PathologyClass::TA},
      {"4. adenomatous-tubulovillous polyp", PathologyClass::TVA},
      {"5. adenomatous-villous polyp", PathologyClass::VA},
      {"6. hyperplastic polyp", PathologyClass::HP},
      {"7. inflammatory polyp", PathologyClass::IP},
  }};
  return options;
}

std::string option_string(PathologyClass c) {
  for (const auto& [text, cls] : option_strings()) {
    if (cls == c) return text;
  }
  return {};
}

void script_oracle(ScriptedBackend& backend, const DatasetManifest& manifest) {
  std::map<std::string, const ImageRecord*> by_digest;
  for (const auto& r : manifest.records) by_digest[attach_file(r.file, false)->digest] = &r;
  backend.set_responder([by_digest](const Conversation& conv, const GenerationParams&) -> std::optional<std::string> {
    const auto img = conv.image();
    if (!img) return std::nullopt;
    auto it = by_digest.find(img->digest);
    if (it == by_digest.end()) return std::nullopt;
    const ImageRecord& rec = *it->second;
    const std::string& last = conv.turns.back().text;
    const bool classify = last.find("pathology class") != std::string::npos ||
                          last.find("select one of the following options") != std::string::npos;
    if (classify) return option_string(rec.pathology);
    return rec.presence ? "There is a polyp in this image." : "No polyp is seen; the mucosa is normal.";
  });
}

void make_point_sensitive(ScriptedBackend& backend, int x, int y) {
  ScriptedBackend::Rule masked;
  masked.pixel = std::make_pair(x, y);
  masked.pixel_equals = {0, 0, 0};
  masked.reply = "The mucosa looks normal; no polyp is visible.";
  backend.add_rule(std::move(masked));
  backend.set_default("A polyp is visible in the image.");
}

std::string prompt_text(const std::string& template_id) {
  return PromptRegistry::load_default().get(template_id).turns.at(0).text;
}

const std::vector<CorpusItem>& extraction_corpus() {
  using K = CorpusItem::Kind;
  using C = Category;
  using P = PathologyClass;
  static const std::vector<CorpusItem> corpus = {
      // unambiguous, detection
      {"There is a polyp visible in the sigmoid colon.", Task::Detect, K::Unambiguous, C::PolypDetected, {}},
      {"The image shows a sessile polyp with a smooth surface.", Task::Detect, K::Unambiguous, C::PolypDetected, {}},
      {"A pedunculated lesion is seen on the colonic wall.", Task::Detect, K::Unambiguous, C::PolypDetected, {}},
      {"Yes, I can see a polyp.", Task::Detect, K::Unambiguous, C::PolypDetected, {}},
      {"This colonoscopy image contains a small polypoid growth.", Task::Detect, K::Unambiguous, C::PolypDetected, {}},
      {"No polyp is visible; the mucosa appears normal.", Task::Detect, K::Unambiguous, C::NoPolyp, {}},
      {"The colonic mucosa looks normal and healthy.", Task::Detect, K::Unambiguous, C::NoPolyp, {}},
      {"Normal colon with no lesions.", Task::Detect, K::Unambiguous, C::NoPolyp, {}},
      {"I do not see any polyps in this image.", Task::Detect, K::Unambiguous, C::NoPolyp, {}},
      {"Unremarkable mucosa without any polyp.", Task::Detect, K::Unambiguous, C::NoPolyp, {}},
      // unambiguous, classification
      {"This is most consistent with a tubular adenoma.", Task::Classify, K::Unambiguous, C::PolypType, P::TA},
      {"The polyp appears to be a hyperplastic polyp.", Task::Classify, K::Unambiguous, C::PolypType, P::HP},
      {"Findings suggest adenocarcinoma.", Task::Classify, K::Unambiguous, C::PolypType, P::AC},
      {"This is a villous adenoma.", Task::Classify, K::Unambiguous, C::PolypType, P::VA},
      {"The lesion is a tubulovillous adenoma.", Task::Classify, K::Unambiguous, C::PolypType, P::TVA},
      {"Inflammatory polyp.", Task::Classify, K::Unambiguous, C::PolypType, P::IP},
      {"3. adenomatous-tubular polyp", Task::Classify, K::Unambiguous, C::PolypType, P::TA},
      {"Answer: 6. hyperplastic polyp", Task::Classify, K::Unambiguous, C::PolypType, P::HP},
      {"**2. adenocarcinoma**", Task::Classify, K::Unambiguous, C::PolypType, P::AC},
      {"7. inflammatory polyp", Task::Classify, K::Unambiguous, C::PolypType, P::IP},
      {"4. adenomatous-tubulovillous polyp", Task::Classify, K::Unambiguous, C::PolypType, P::TVA},
      {"5. adenomatous-villous polyp", Task::Classify, K::Unambiguous, C::PolypType, P::VA},
      {"Based on the surface pattern, this is a tubular adenoma.", Task::Classify, K::Unambiguous, C::PolypType, P::TA},
      {"The morphology is typical of a hyperplastic polyp.", Task::Classify, K::Unambiguous, C::PolypType, P::HP},
      {"Option 2: adenocarcinoma", Task::Classify, K::Unambiguous, C::PolypType, P::AC},
      {"Diagnosis: villous adenoma.", Task::Classify, K::Unambiguous, C::PolypType, P::VA},
      {"The image shows normal colonic mucosa.", Task::Classify, K::Unambiguous, C::NoPolyp, {}},
      {"1. normal", Task::Classify, K::Unambiguous, C::NoPolyp, {}},
      {"I believe this is an inflammatory pseudopolyp.", Task::Classify, K::Unambiguous, C::PolypType, P::IP},
      {"Most likely a tubulovillous adenoma.", Task::Classify, K::Unambiguous, C::PolypType, P::TVA},
      // more than one class named
      {"It could be a tubular adenoma or a hyperplastic polyp.", Task::Classify, K::MultiClass, C::NeedsHumanMultipleOrNone, {}},
      {"Either adenocarcinoma or villous adenoma.", Task::Classify, K::MultiClass, C::NeedsHumanMultipleOrNone, {}},
      {"3. adenomatous-tubular polyp or 4. adenomatous-tubulovillous polyp", Task::Classify, K::MultiClass,
       C::NeedsHumanMultipleOrNone, {}},
      {"The differential includes hyperplastic polyp and inflammatory polyp.", Task::Classify, K::MultiClass,
       C::NeedsHumanMultipleOrNone, {}},
      {"Tubular adenoma, although a tubulovillous adenoma is also possible.", Task::Classify, K::MultiClass,
       C::NeedsHumanMultipleOrNone, {}},
      {"Options 2 and 3: adenocarcinoma or tubular adenoma.", Task::Classify, K::MultiClass, C::NeedsHumanMultipleOrNone, {}},
      {"Features of both villous adenoma and tubular adenoma are present.", Task::Classify, K::MultiClass,
       C::NeedsHumanMultipleOrNone, {}},
      {"This may be an inflammatory polyp or a hyperplastic polyp.", Task::Classify, K::MultiClass,
       C::NeedsHumanMultipleOrNone, {}},
      {"Possible adenocarcinoma versus tubulovillous adenoma.", Task::Classify, K::MultiClass, C::NeedsHumanMultipleOrNone, {}},
      {"5. adenomatous-villous polyp, 6. hyperplastic polyp", Task::Classify, K::MultiClass, C::NeedsHumanMultipleOrNone, {}},
      {"A tubular adenoma with areas suggestive of adenocarcinoma.", Task::Classify, K::MultiClass,
       C::NeedsHumanMultipleOrNone, {}},
      {"Hyperplastic polyp or tubular adenoma; both fit.", Task::Classify, K::MultiClass, C::NeedsHumanMultipleOrNone, {}},
      {"Inflammatory polyp versus adenocarcinoma.", Task::Classify, K::MultiClass, C::NeedsHumanMultipleOrNone, {}},
      {"It looks villous, but a tubular component is also seen.", Task::Classify, K::MultiClass, C::NeedsHumanMultipleOrNone,
       {}},
      {"Tubulovillous adenoma or villous adenoma.", Task::Classify, K::MultiClass, C::NeedsHumanMultipleOrNone, {}},
      // hedged
      {"I am unsure what this image shows.", Task::Detect, K::Hedged, C::NeedsHumanUnsure, {}},
      {"I'm not sure; it is difficult to determine from this image.", Task::Classify, K::Hedged, C::NeedsHumanUnsure, {}},
      {"It is hard to say whether there is a polyp.", Task::Detect, K::Hedged, C::NeedsHumanUnsure, {}},
      {"I cannot determine the pathology class from an image alone.", Task::Classify, K::Hedged, C::NeedsHumanUnsure, {}},
      {"I'm unable to provide a diagnosis.", Task::Detect, K::Hedged, C::NeedsHumanUnsure, {}},
      {"It's uncertain; this might be a tubular adenoma but I cannot be sure.", Task::Classify, K::Hedged,
       C::NeedsHumanUnsure, {}},
      {"Hard to tell from this view.", Task::Detect, K::Hedged, C::NeedsHumanUnsure, {}},
      {"I don't know.", Task::Classify, K::Hedged, C::NeedsHumanUnsure, {}},
      {"As an AI, I cannot provide a medical diagnosis.", Task::Detect, K::Hedged, C::NeedsHumanUnsure, {}},
      {"It is not possible to determine the polyp type from this image.", Task::Classify, K::Hedged, C::NeedsHumanUnsure, {}},
      {"Difficult to say without histology.", Task::Detect, K::Hedged, C::NeedsHumanUnsure, {}},
      {"I can't diagnose this from a photo.", Task::Classify, K::Hedged, C::NeedsHumanUnsure, {}},
      {"Cannot be determined without biopsy.", Task::Detect, K::Hedged, C::NeedsHumanUnsure, {}},
      {"Unsure, possibly hyperplastic.", Task::Classify, K::Hedged, C::NeedsHumanUnsure, {}},
      {"I'm uncertain whether this is normal mucosa or a polyp.", Task::Detect, K::Hedged, C::NeedsHumanUnsure, {}},
  };
  return corpus;
}

}  // namespace testsupport
