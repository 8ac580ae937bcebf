from io import BytesIO
import logging

from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER, TA_JUSTIFY
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import getSampleStyleSheet, ParagraphStyle
from reportlab.lib.units import inch
from reportlab.platypus import SimpleDocTemplate, Paragraph, Spacer, Table, TableStyle

logger = logging.getLogger(__name__)

METHOD_TITLES = {
    'cgan': 'cGAN upsampling',
    'cnn_only': 'CNN only (F_L tensors)',
    'lai': 'Linear interpolation (LAI)',
    'csi': 'Cubic-spline interpolation (CSI)',
    'full_rate': '20 MHz reference',
}


class AccuracyReportPDFGenerator:
    """Generate a PDF summary of SEI accuracy reports"""

    def __init__(self):
        self.styles = getSampleStyleSheet()
        self.setup_custom_styles()

    def setup_custom_styles(self):
        """Create custom paragraph styles for the PDF"""
        self.styles.add(ParagraphStyle(
            name='CustomTitle',
            parent=self.styles['Title'],
            fontSize=22,
            spaceAfter=24,
            textColor=colors.HexColor('#2c3e50'),
            alignment=TA_CENTER,
            fontName='Helvetica-Bold'
        ))

        self.styles.add(ParagraphStyle(
            name='SectionHeader',
            parent=self.styles['Heading1'],
            fontSize=14,
            spaceAfter=10,
            spaceBefore=16,
            textColor=colors.HexColor('#34495e'),
            fontName='Helvetica-Bold',
            borderWidth=1,
            borderColor=colors.HexColor('#bdc3c7'),
            borderPadding=6,
            backColor=colors.HexColor('#ecf0f1')
        ))

        self.styles.add(ParagraphStyle(
            name='ContentText',
            parent=self.styles['Normal'],
            fontSize=10,
            spaceAfter=10,
            textColor=colors.HexColor('#2c3e50'),
            alignment=TA_JUSTIFY,
        ))

    def generate_pdf_report(self, reports, config_hash='', config_path='', output_path=None):
        """
        Build the summary document.

        Args:
            reports: EvalReport list, in the order they should appear
            config_hash: SHA-256 of the config that produced the reports
            output_path: Optional file path to save the PDF (if None, returns BytesIO)
        """
        buffer = open(output_path, 'wb') if output_path else BytesIO()

        doc = SimpleDocTemplate(
            buffer,
            pagesize=A4,
            rightMargin=72,
            leftMargin=72,
            topMargin=72,
            bottomMargin=72,
            invariant=1,
            title='SEI accuracy summary',
        )

        story = []
        self._add_header(story, reports, config_hash, config_path)
        for report in reports:
            self._add_report_table(story, report)

        doc.build(story)
        logger.info(f"Built PDF summary of {len(reports)} reports")

        if output_path:
            buffer.close()
            return output_path
        buffer.seek(0)
        return buffer

    def _add_header(self, story, reports, config_hash, config_path):
        story.append(Paragraph("Specific Emitter Identification Accuracy", self.styles['CustomTitle']))

        info = [
            ['Config:', config_path or 'n/a'],
            ['Config SHA-256:', config_hash or 'n/a'],
            ['Reports:', str(len(reports))],
        ]
        info_table = Table(info, colWidths=[1.5 * inch, 4.5 * inch])
        info_table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (0, -1), colors.HexColor('#3498db')),
            ('TEXTCOLOR', (0, 0), (0, -1), colors.whitesmoke),
            ('BACKGROUND', (1, 0), (1, -1), colors.HexColor('#ecf0f1')),
            ('FONTNAME', (0, 0), (0, -1), 'Helvetica-Bold'),
            ('FONTNAME', (1, 0), (1, -1), 'Courier'),
            ('FONTSIZE', (0, 0), (-1, -1), 8),
            ('GRID', (0, 0), (-1, -1), 1, colors.HexColor('#bdc3c7')),
            ('VALIGN', (0, 0), (-1, -1), 'MIDDLE'),
        ]))
        story.append(info_table)
        story.append(Spacer(1, 16))
        story.append(Paragraph(
            "Percent correct classification per test SNR and emitter. The Avg column is the mean "
            "over emitters; blank cells had no test records.",
            self.styles['ContentText']
        ))

    def _add_report_table(self, story, report):
        title = METHOD_TITLES.get(report.method, report.method)
        story.append(Paragraph(f"{title} at F_L = {report.f_low / 1e6:g} MHz", self.styles['SectionHeader']))

        emitters = sorted({eid for _, eid in report.cells})
        header = ['SNR (dB)'] + [f"E{eid}" for eid in emitters] + ['Avg']
        data = [header]
        for snr in sorted(report.averages):
            row = [f"{snr:g}"]
            for eid in emitters:
                value = report.cells.get((snr, eid))
                row.append('' if value is None else f"{value:.1f}")
            average = report.averages[snr]
            row.append('' if average is None else f"{average:.1f}")
            data.append(row)

        table = Table(data, repeatRows=1)
        table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor('#2ecc71')),
            ('TEXTCOLOR', (0, 0), (-1, 0), colors.whitesmoke),
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('BACKGROUND', (-1, 1), (-1, -1), colors.HexColor('#d5f4e6')),
            ('ALIGN', (0, 0), (-1, -1), 'CENTER'),
            ('FONTSIZE', (0, 0), (-1, -1), 9),
            ('GRID', (0, 0), (-1, -1), 1, colors.HexColor('#27ae60')),
        ]))
        story.append(table)
        story.append(Spacer(1, 12))
