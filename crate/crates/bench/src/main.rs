fn main() {
    std::process::exit(dtml_bench::cli::main_with_args(std::env::args_os()));
}
