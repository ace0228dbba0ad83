//! Terminal output helpers honoring the `NO_COLOR` convention: when the
//! variable is set (to anything), status markers print without ANSI codes.

pub fn color_enabled() -> bool {
    std::env::var_os("NO_COLOR").is_none()
}

pub fn pass_marker() -> &'static str {
    if color_enabled() {
        "\x1b[32mPASS\x1b[0m"
    } else {
        "PASS"
    }
}

pub fn fail_marker() -> &'static str {
    if color_enabled() {
        "\x1b[31mFAIL\x1b[0m"
    } else {
        "FAIL"
    }
}
