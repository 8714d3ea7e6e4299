fn main() {
    std::process::exit(wildfire_core::cli::main_entry(std::env::args_os()));
}
