#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace polypeval {

/// Histopathology ground truth. Normal means no polyp in the image.
enum class PathologyClass { Normal, AC, TA, TVA, VA, HP, IP };

inline constexpr std::array<PathologyClass, 7> kAllClasses = {
    PathologyClass::Normal, PathologyClass::AC, PathologyClass::TA, PathologyClass::TVA,
    PathologyClass::VA,     PathologyClass::HP, PathologyClass::IP};

inline constexpr std::array<PathologyClass, 6> kPolypClasses = {
    PathologyClass::AC, PathologyClass::TA, PathologyClass::TVA,
    PathologyClass::VA, PathologyClass::HP, PathologyClass::IP};

std::string_view class_code(PathologyClass c);
std::string_view class_name(PathologyClass c);
std::optional<PathologyClass> parse_class_code(std::string_view code);
/// Comma-separated list of the legal codes, for error messages.
std::string legal_class_codes();

enum class Task { Detect, Classify };

std::string_view task_name(Task t);
std::optional<Task> parse_task(std::string_view s);

/// Label space of both tasks. Detect uses Polyp/Normal/NoAnswer; classify uses
/// the six polyp classes, Normal, NoAnswer (No-A) and TwoOptions (2OP).
enum class TaskLabel { Polyp, Normal, AC, TA, TVA, VA, HP, IP, NoAnswer, TwoOptions };

std::string_view label_name(TaskLabel l);
std::optional<TaskLabel> parse_label(std::string_view s);

TaskLabel label_for_class(PathologyClass c);
std::optional<PathologyClass> class_for_label(TaskLabel l);

/// Ground-truth label of an image under a task.
TaskLabel truth_label(PathologyClass c, Task task);

}  // namespace polypeval
