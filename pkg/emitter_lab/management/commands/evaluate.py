import logging

from tqdm import tqdm

from emitter_lab.pdf_report import AccuracyReportPDFGenerator
from emitter_lab.sei import GRID_METHODS, report_file_name, run_comparison, write_plotdata, write_report_csv

from ._base import ExperimentCommand, parse_f_low

logger = logging.getLogger(__name__)

PLOTDATA_NAME = 'plotdata.csv'
SUMMARY_NAME = 'summary.pdf'


class Command(ExperimentCommand):
    help = 'Classify the test split with every method and write accuracy reports and plot data'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--method', choices=GRID_METHODS, action='append', dest='methods',
                            help='Method to evaluate (repeatable; default: [evaluation] methods)')
        parser.add_argument('--f-low', type=parse_f_low, action='append', dest='f_lows',
                            help='Lower sampling rate in MHz (repeatable; default: [evaluation] f_lows)')
        parser.add_argument('--augment', action='store_true', help='Use classifiers trained with online augmentation')
        parser.add_argument('--pdf', action='store_true', help=f'Also write {SUMMARY_NAME}')
        parser.add_argument('--force', action='store_true', help='Overwrite existing reports')

    def run(self, experiment, **options):
        dataset_dir = self.require_dataset(experiment)
        methods = options.get('methods') or experiment.evaluation['methods']
        f_lows = options.get('f_lows') or experiment.evaluation['f_lows']
        reports_dir = experiment.reports_dir
        if (reports_dir / PLOTDATA_NAME).exists() and not options['force']:
            self.refuse_overwrite(reports_dir)
        reports_dir.mkdir(parents=True, exist_ok=True)

        cfg = experiment.comparison_config(self.workers)
        total = len(f_lows) * len([m for m in GRID_METHODS if m in methods]) + 1
        with tqdm(total=total, desc='evaluate', unit='report', disable=not self.show_progress(options)) as bar:
            reports = run_comparison(dataset_dir, experiment.checkpoint_dir, f_lows, methods, cfg,
                                     progress=bar.update)

        for report in reports:
            path = reports_dir / report_file_name(report)
            write_report_csv(path, report, experiment.config_hash)
            known = [value for value in report.averages.values() if value is not None]
            mean = f"{sum(known) / len(known):.1f}%" if known else 'n/a'
            self.stdout.write(f"{report.method:>9} F_L={report.f_low / 1e6:>4g} MHz  mean accuracy {mean}  -> {path.name}")

        write_plotdata(reports_dir / PLOTDATA_NAME, reports, experiment.config_hash)
        if options['pdf']:
            AccuracyReportPDFGenerator().generate_pdf_report(
                reports, experiment.config_hash, experiment.path, output_path=reports_dir / SUMMARY_NAME)
        logger.info(f"Wrote {len(reports)} reports to {reports_dir}")
        self.stdout.write(f"{len(reports)} reports written to {reports_dir}")
        return None
