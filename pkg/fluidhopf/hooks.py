app_name = "fluidhopf"
app_title = "Fluid Passage"
app_publisher = "fluidhopf contributors"
app_description = "First-passage functionals of time-inhomogeneous Markov-modulated fluid processes."
app_license = "mit"

# Config
# ------------------

# field schema of a run config, relative to the app package
config_schema = "config/fluid_config.json"

# Commands
# ------------------
# CLI command -> handler(config, args, out_dir)

commands = {
	"factorize": "fluidhopf.cli.run_factorize",
	"passage": "fluidhopf.cli.run_passage",
	"simulate": "fluidhopf.cli.run_simulate",
	"verify": "fluidhopf.cli.run_verify",
}

# Verify Suites
# ------------------
# suite name -> suite(settings)

verify_suites = {
	"homog": "fluidhopf.fluid_passage.verify.verify.homog_suite",
	"inhomog": "fluidhopf.fluid_passage.verify.verify.inhomog_suite",
	"jumps": "fluidhopf.fluid_passage.verify.verify.jumps_suite",
	"identities": "fluidhopf.fluid_passage.verify.verify.identities_suite",
}

# Output Files
# ------------------

provenance_file = "provenance.json"
error_log_file = "error_log.json"
