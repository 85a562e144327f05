fn main() {
    std::process::exit(vardisc::cli::main_with_args(std::env::args_os()));
}
