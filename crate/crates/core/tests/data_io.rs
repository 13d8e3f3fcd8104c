use std::fs;
use std::path::PathBuf;

use rpchoice::data::{load_csv, write_csv, CsvSchema, ShareSource};
use rpchoice::{Dataset, Error, ShareTotal};

fn file(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

const COMPLETE: &str = "market,choice,price,promo,share
1,a,1.0,0,0.2
1,b,2.0,1,0.3
1,c,3.0,0,0.5
2,a,1.5,1,0.1
2,b,2.5,0,0.6
2,c,3.5,1,0.3
";

#[test]
fn complete_file_loads_in_shape() {
    let dir = tempfile::tempdir().unwrap();
    let data = load_csv(file(&dir, "d.csv", COMPLETE), &CsvSchema::default()).unwrap();
    assert_eq!((data.n(), data.d(), data.b()), (2, 3, 2));
    assert_eq!(data.covariate_names(), ["price", "promo"]);
    assert_eq!(data.choice_ids(), ["a", "b", "c"]);
    assert_eq!(data.markets()[1].covariates()[(2, 0)], 3.5);
    assert_eq!(data.share_total(), ShareTotal::Complete);
}

#[test]
fn bad_share_total_names_the_market() {
    let dir = tempfile::tempdir().unwrap();
    let body = COMPLETE.replace("2,b,2.5,0,0.6", "2,b,2.5,0,0.8");
    let err = load_csv(file(&dir, "d.csv", &body), &CsvSchema::default()).unwrap_err();
    match err {
        Error::Validation { market, .. } => assert_eq!(market, "2"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn quantities_and_custcounts_build_an_outside_option() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = file(
        &dir,
        "q.csv",
        "market,choice,price,quantity\n7,1,2.0,30\n7,2,3.0,10\n8,1,2.1,0\n8,2,3.1,0\n",
    );
    let cc = file(&dir, "cc.csv", "market,custcount\n7,100\n8,100\n");
    let schema = CsvSchema {
        shares: ShareSource::Quantity {
            column: "quantity".into(),
            custcount: cc,
        },
        ..CsvSchema::default()
    };
    let data = load_csv(&data_path, &schema).unwrap();
    assert_eq!(data.d(), 3);
    assert_eq!(data.markets()[0].shares().as_slice(), &[0.3, 0.1, 0.6]);
    assert_eq!(data.markets()[1].shares().as_slice(), &[0.0, 0.0, 1.0]);
    assert_eq!(data.markets()[0].covariates()[(2, 0)], 0.0);
    assert_eq!(data.choice_ids().last().unwrap(), "__outside__");
}

#[test]
fn quantities_exceeding_custcount_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = file(&dir, "q.csv", "market,choice,x,quantity\n1,1,2.0,80\n1,2,3.0,30\n2,1,1,1\n2,2,1,1\n");
    let cc = file(&dir, "cc.csv", "market,custcount\n1,100\n2,100\n");
    let schema = CsvSchema {
        shares: ShareSource::Quantity {
            column: "quantity".into(),
            custcount: cc,
        },
        ..CsvSchema::default()
    };
    assert!(matches!(load_csv(&data_path, &schema), Err(Error::Validation { ref market, .. }) if market == "1"));
}

#[test]
fn missing_rows_need_fill_missing() {
    let dir = tempfile::tempdir().unwrap();
    let body = "market,choice,x,share\n1,1,1.0,0.5\n1,2,2.0,0.5\n2,1,3.0,1.0\n";
    let path = file(&dir, "m.csv", body);
    assert!(matches!(load_csv(&path, &CsvSchema::default()), Err(Error::Dimension { .. })));
    let schema = CsvSchema {
        fill_missing: true,
        ..CsvSchema::default()
    };
    let data = load_csv(&path, &schema).unwrap();
    assert_eq!(data.markets()[1].shares().as_slice(), &[1.0, 0.0]);
    assert_eq!(data.markets()[1].covariates()[(1, 0)], 0.0);
}

#[test]
fn parse_errors_report_the_file_line() {
    let dir = tempfile::tempdir().unwrap();
    let body = "market,choice,x,share\n1,1,1.0,0.5\n1,2,oops,0.5\n";
    match load_csv(file(&dir, "p.csv", body), &CsvSchema::default()) {
        Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn numeric_ids_sort_numerically() {
    let dir = tempfile::tempdir().unwrap();
    let body = "market,choice,x,share\n10,2,1,0.5\n10,10,1,0.5\n9,2,1,0.5\n9,10,1,0.5\n";
    let data = load_csv(file(&dir, "n.csv", body), &CsvSchema::default()).unwrap();
    assert_eq!(data.market_ids(), ["9", "10"]);
    assert_eq!(data.choice_ids(), ["2", "10"]);
}

#[test]
fn implicit_outside_share_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let body = "market,choice,x,share\n1,1,1,0.2\n1,2,2,0.3\n2,1,1,0.1\n2,2,2,0.1\n";
    let path = file(&dir, "o.csv", body);
    assert!(load_csv(&path, &CsvSchema::default()).is_err());
    let schema = CsvSchema {
        outside_option: true,
        ..CsvSchema::default()
    };
    assert_eq!(load_csv(&path, &schema).unwrap().share_total(), ShareTotal::ImplicitOutside);
}

#[test]
fn written_files_reload_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let data: Dataset = load_csv(file(&dir, "d.csv", COMPLETE), &CsvSchema::default()).unwrap();
    let out = dir.path().join("again.csv");
    write_csv(&data, &out).unwrap();
    assert_eq!(load_csv(&out, &CsvSchema::default()).unwrap(), data);
}
