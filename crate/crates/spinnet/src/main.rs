fn main() -> std::process::ExitCode {
    spinnet::cli::main()
}
