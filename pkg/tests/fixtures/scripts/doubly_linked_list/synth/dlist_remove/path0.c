#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_dlist_remove_path0_null_list(void)
{
    struct dnode n = {0};
    TEST_ASSERT_EQUAL_INT(-1, dlist_remove(NULL, &n));
}
