fn main() {
    std::process::exit(traffic_llm::cli::main_with_args(std::env::args_os()));
}
