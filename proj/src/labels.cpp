#include "polypeval/labels.hpp"

namespace polypeval {

std::string_view class_code(PathologyClass c) {
  switch (c) {
    case PathologyClass::Normal: return "Normal";
    case PathologyClass::AC: return "AC";
    case PathologyClass::TA: return "TA";
    case PathologyClass::TVA: return "TVA";
    case PathologyClass::VA: return "VA";
    case PathologyClass::HP: return "HP";
    case PathologyClass::IP: return "IP";
  }
  return "?";
}

std::string_view class_name(PathologyClass c) {
  switch (c) {
    case PathologyClass::Normal: return "Normal";
    case PathologyClass::AC: return "Adenocarcinoma";
    case PathologyClass::TA: return "Tubular Adenoma";
    case PathologyClass::TVA: return "Tubulovillous Adenoma";
    case PathologyClass::VA: return "Villous Adenoma";
    case PathologyClass::HP: return "Hyperplastic Polyp";
    case PathologyClass::IP: return "Inflammatory Polyp";
  }
  return "?";
}

std::optional<PathologyClass> parse_class_code(std::string_view code) {
  for (auto c : kAllClasses) {
    if (class_code(c) == code) return c;
  }
  return std::nullopt;
}

std::string legal_class_codes() {
  std::string out;
  for (auto c : kAllClasses) {
    if (!out.empty()) out += ", ";
    out += class_code(c);
  }
  return out;
}

std::string_view task_name(Task t) { return t == Task::Detect ? "detect" : "classify"; }

std::optional<Task> parse_task(std::string_view s) {
  if (s == "detect") return Task::Detect;
  if (s == "classify") return Task::Classify;
  return std::nullopt;
}

std::string_view label_name(TaskLabel l) {
  switch (l) {
    case TaskLabel::Polyp: return "Polyp";
    case TaskLabel::Normal: return "Normal";
    case TaskLabel::AC: return "AC";
    case TaskLabel::TA: return "TA";
    case TaskLabel::TVA: return "TVA";
    case TaskLabel::VA: return "VA";
    case TaskLabel::HP: return "HP";
    case TaskLabel::IP: return "IP";
    case TaskLabel::NoAnswer: return "No-A";
    case TaskLabel::TwoOptions: return "2OP";
  }
  return "?";
}

std::optional<TaskLabel> parse_label(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(TaskLabel::TwoOptions); ++i) {
    auto l = static_cast<TaskLabel>(i);
    if (label_name(l) == s) return l;
  }
  return std::nullopt;
}

TaskLabel label_for_class(PathologyClass c) {
  switch (c) {
    case PathologyClass::Normal: return TaskLabel::Normal;
    case PathologyClass::AC: return TaskLabel::AC;
    case PathologyClass::TA: return TaskLabel::TA;
    case PathologyClass::TVA: return TaskLabel::TVA;
    case PathologyClass::VA: return TaskLabel::VA;
    case PathologyClass::HP: return TaskLabel::HP;
    case PathologyClass::IP: return TaskLabel::IP;
  }
  return TaskLabel::NoAnswer;
}

std::optional<PathologyClass> class_for_label(TaskLabel l) {
  switch (l) {
    case TaskLabel::Normal: return PathologyClass::Normal;
    case TaskLabel::AC: return PathologyClass::AC;
    case TaskLabel::TA: return PathologyClass::TA;
    case TaskLabel::TVA: return PathologyClass::TVA;
    case TaskLabel::VA: return PathologyClass::VA;
    case TaskLabel::HP: return PathologyClass::HP;
    case TaskLabel::IP: return PathologyClass::IP;
    default: return std::nullopt;
  }
}

TaskLabel truth_label(PathologyClass c, Task task) {
  if (task == Task::Detect) {
    return c == PathologyClass::Normal ? TaskLabel::Normal : TaskLabel::Polyp;
  }
  return label_for_class(c);
}

}  // namespace polypeval
