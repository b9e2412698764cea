fn main() {
    std::process::exit(rubric_core::run_cli());
}
