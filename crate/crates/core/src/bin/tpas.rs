fn main() { std::process::exit(tpas::cli::main_exit()) }
